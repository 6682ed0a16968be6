//! Corpus export from the session service's data directory.

use std::path::Path;

use refgame_core::corpus::dialogues_from_events;
use refgame_server::{list_sessions, read_session};

use crate::corpus_io::{write_corpus, SessionFiles};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportReport {
    pub sessions: usize,
    pub dialogues: usize,
    pub res_sets: usize,
    /// Sessions that could not be read or replayed.
    pub skipped: Vec<(String, String)>,
}

/// Reads every stored session (without modifying the data directory) and writes a
/// corpus directory. Pair ids are the session ids.
pub fn run_export(data_dir: &Path, out: &Path) -> Result<ExportReport, CliError> {
    let dirs = list_sessions(data_dir)?;
    if dirs.is_empty() {
        return Err(CliError::Usage(format!("no sessions under {}", data_dir.display())));
    }
    let mut dialogues = Vec::new();
    let mut skipped = Vec::new();
    let mut sessions = 0;
    for dir in dirs {
        let name = dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let (record, events) = match read_session(&dir) {
            Ok(r) => r,
            Err(e) => {
                skipped.push((name, e.to_string()));
                continue;
            }
        };
        match dialogues_from_events(&record.session_id, &record.config, &events) {
            Ok(d) => dialogues.extend(d),
            Err(e) => {
                skipped.push((name, e.to_string()));
                continue;
            }
        }
        SessionFiles {
            pair_id: &record.session_id,
            config: &record.config,
            events: &events,
        }
        .write(out)?;
        sessions += 1;
    }
    let res_sets = write_corpus(out, &dialogues)?;
    Ok(ExportReport {
        sessions,
        dialogues: dialogues.len(),
        res_sets,
        skipped,
    })
}
