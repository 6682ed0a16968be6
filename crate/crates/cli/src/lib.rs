//! Library behind the `refgame` binary: sweep configs, HTTP completion providers
//! and one module per subcommand.

pub mod config;
pub mod corpus_io;
pub mod error;
pub mod export;
pub mod extract;
pub mod provider;
pub mod report;
pub mod serve;
pub mod simulate;

use std::path::Path;

use refgame_core::synthetic::{generate, SyntheticParams};

pub use config::SweepConfig;
pub use error::CliError;

/// Writes a synthetic tagged corpus and returns the number of dialogues.
pub fn run_synthetic(params: &SyntheticParams, out: &Path) -> Result<usize, CliError> {
    if params.label.is_empty() || params.n_pairs == 0 {
        return Err(CliError::Usage("synthetic corpus needs a label and at least one pair".into()));
    }
    let dialogues = generate(params);
    corpus_io::write_corpus(out, &dialogues)?;
    Ok(dialogues.len())
}
