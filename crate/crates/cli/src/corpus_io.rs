//! Corpus directory layout shared by `simulate`, `export`, `extract` and `metrics`.
//!
//! ```text
//! <dir>/dialogues.jsonl                  one dialogue per (pair, round)
//! <dir>/res.jsonl                        referring-expression sets
//! <dir>/transcripts/<pair>.events.jsonl  raw event log
//! <dir>/transcripts/<pair>.txt           readable transcript
//! <dir>/transcripts/<pair>.config.json   session configuration
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use refgame_core::corpus::{
    export_jsonl, extract_res_tagged, import_jsonl, CorpusError, Dialogue, ReferringExpressionSet,
};
use refgame_core::game::SessionConfig;
use refgame_core::participants::{ParticipantKind, Role};
use refgame_core::transcript::{Payload, TranscriptEvent};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub const DIALOGUES_FILE: &str = "dialogues.jsonl";
pub const RES_FILE: &str = "res.jsonl";
pub const TRANSCRIPTS_DIR: &str = "transcripts";

/// `path` itself if it is a file, else `path/<file>`.
pub fn resolve(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dialogues(corpus: &Path) -> Result<Vec<Dialogue>, CliError> {
    let path = resolve(corpus, DIALOGUES_FILE);
    if !path.exists() {
        return Err(CliError::Usage(format!("no corpus at {}", path.display())));
    }
    Ok(import_jsonl(&path)?)
}

pub fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(CorpusError::from)?;
        w.write_all(b"\n").map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let r = BufReader::new(File::open(path).map_err(CliError::io(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

pub fn read_res(path: &Path) -> Result<Vec<ReferringExpressionSet>, CliError> {
    read_lines(path)
}

/// Tagged RE sets of every completed dialogue that carries tags.
pub fn tagged_res(dialogues: &[Dialogue]) -> Vec<ReferringExpressionSet> {
    dialogues
        .iter()
        .filter(|d| d.is_completed())
        .filter_map(|d| extract_res_tagged(d).ok())
        .collect()
}

/// One session's files in a corpus directory.
pub struct SessionFiles<'a> {
    pub pair_id: &'a str,
    pub config: &'a SessionConfig,
    pub events: &'a [TranscriptEvent],
}

impl SessionFiles<'_> {
    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let dir = out_dir.join(TRANSCRIPTS_DIR);
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        write_lines(&dir.join(format!("{}.events.jsonl", self.pair_id)), self.events)?;
        let text_path = dir.join(format!("{}.txt", self.pair_id));
        fs::write(&text_path, render_events(self.pair_id, self.config, self.events)).map_err(CliError::io(&text_path))?;
        let config_path = dir.join(format!("{}.config.json", self.pair_id));
        let mut json = serde_json::to_vec_pretty(self.config).map_err(CorpusError::from)?;
        json.push(b'\n');
        fs::write(&config_path, json).map_err(CliError::io(&config_path))
    }
}

/// Writes the corpus-level files and returns how many RE sets were written.
pub fn write_corpus(out_dir: &Path, dialogues: &[Dialogue]) -> Result<usize, CliError> {
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    export_jsonl(&out_dir.join(DIALOGUES_FILE), dialogues)?;
    let res = tagged_res(dialogues);
    write_lines(&out_dir.join(RES_FILE), &res)?;
    Ok(res.len())
}

fn participant(config: &SessionConfig, role: Role) -> String {
    let p = config.participant(role);
    let kind = match p.kind {
        ParticipantKind::Human => "human",
        ParticipantKind::Llm => "llm",
        ParticipantKind::Scripted => "scripted",
    };
    match &p.model_id {
        Some(m) => format!("{kind} {m}"),
        None => kind.to_string(),
    }
}

/// Readable transcript with times relative to the first event.
pub fn render_events(pair_id: &str, config: &SessionConfig, events: &[TranscriptEvent]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {pair_id} | {} | seed {} | director: {} | matcher: {}",
        config.label(),
        config.seed,
        participant(config, Role::Director),
        participant(config, Role::Matcher)
    );
    let t0 = events.first().map_or(0, |e| e.timestamp_ms);
    for e in events {
        let dt = (e.timestamp_ms - t0) as f64 / 1000.0;
        let who = e.actor.role().map_or("system", Role::as_str);
        let line = match &e.payload {
            Payload::RoundStart { round } => format!("\n== round {round} =="),
            Payload::ChatMessage { text } => format!("[{dt:8.1}s] {who}: {text}"),
            Payload::Placement { tile, position } => format!("[{dt:8.1}s] {who} places tile {tile} at position {position}"),
            Payload::Clear { position } => format!("[{dt:8.1}s] {who} clears position {position}"),
            Payload::Submit => format!("[{dt:8.1}s] {who} submits"),
            Payload::RoundFeedback { round, result } => {
                let correct = result.per_position_correct.iter().filter(|c| **c).count();
                format!(
                    "== round {round} result: {correct}/{} correct ({:.1}%)",
                    result.per_position_correct.len(),
                    result.accuracy_pct
                )
            }
            Payload::Abort { reason, round } => match round {
                Some(k) => format!("== round {k} aborted: {reason}"),
                None => format!("== session aborted: {reason}"),
            },
            Payload::TypingStart | Payload::TypingStop => continue,
            other => format!("[{dt:8.1}s] {who}: <{}>", other.kind()),
        };
        s.push_str(&line);
        s.push('\n');
    }
    s
}
