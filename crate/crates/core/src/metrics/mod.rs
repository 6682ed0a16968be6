//! Communicative success, effort and lexical entrainment measures, trend fits and reports.
//!
//! Numeric code is generic over [`Real`](crate::scalar::Real) so it runs in `f32` or `f64`;
//! the crate root exports `f64` aliases.

mod overlap;
mod report;
mod rows;
mod stats;
pub mod text;

pub use overlap::{jaccard, lcs_len, rlo, rouge_l, rouge_l_f1, rouge_l_tokens, RougeScore};
pub use report::{
    aggregate, emit_reports, order_labels, slope_grid, write_rows_csv, Aggregates, Metric, RoundCell, TrendFit,
};
pub use rows::{compute_rows, effort_row, entrainment_rows, EffortRow, EntrainmentRow, MetricsRow};
pub use stats::{mean_ci, ols_fit, spearman, stars, CellStats, OlsFit};
pub use text::{content_tokens, rouge_tokens, tokenize_content, word_count, TokenMultiset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("current referring expression has no content words")]
    EmptyCurrentRe,
    #[error("both referring expressions have no content words")]
    EmptyRes,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("all x values are equal")]
    DegenerateX,
    #[error("empty cell")]
    EmptyCell,
    #[error("no referring expression for basket {0}")]
    MissingBasket(String),
    #[error("nothing to aggregate")]
    EmptyAggregate,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("i/o error: {0}")]
    Io(String),
}
