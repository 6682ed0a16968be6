//! Metrics over a corpus directory.

use std::path::{Path, PathBuf};

use refgame_core::metrics::{aggregate, compute_rows, emit_reports, slope_grid};
use refgame_core::Aggregates;

use crate::corpus_io::{load_dialogues, read_res, resolve, RES_FILE};
use crate::error::CliError;

pub struct MetricsReport {
    pub aggregates: Aggregates,
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// The per-metric trend grid as aligned text.
    pub fn render_grid(&self) -> String {
        let (header, records) = slope_grid(&self.aggregates);
        let mut table = vec![header];
        table.extend(records);
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r.get(c).map_or(0, |s| s.chars().count())).max().unwrap_or(0))
            .collect();
        table
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Computes metrics rows and aggregates for a corpus and writes the report tables.
/// RE sets come from `res` or the corpus's own `res.jsonl`; without them the RE
/// metrics are skipped with a warning.
pub fn run_metrics(corpus: &Path, res: Option<&Path>, out: &Path) -> Result<MetricsReport, CliError> {
    let dialogues = load_dialogues(corpus)?;
    if dialogues.is_empty() {
        return Err(CliError::Usage(format!("corpus {} is empty", corpus.display())));
    }
    let mut warnings = Vec::new();
    let res_path = match res {
        Some(p) => Some(p.to_path_buf()),
        None if corpus.is_dir() => Some(resolve(corpus, RES_FILE)).filter(|p| p.exists()),
        None => None,
    };
    let re_sets = match &res_path {
        Some(p) => read_res(p)?,
        None => Vec::new(),
    };
    if re_sets.is_empty() {
        warnings.push("no referring-expression sets found; RE metrics skipped".to_string());
    }
    let (rows, row_warnings) = compute_rows::<f64>(&dialogues, &re_sets);
    warnings.extend(row_warnings);
    let aggregates = aggregate(&rows)?;
    let written = emit_reports(&aggregates, out)?;
    Ok(MetricsReport {
        aggregates,
        written,
        warnings,
    })
}
