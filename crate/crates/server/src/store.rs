//! On-disk layout: `<data_dir>/sessions/<id>/session.json` plus an append-only
//! `events.jsonl` with one transcript event per line.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use refgame_core::game::SessionConfig;
use refgame_core::transcript::TranscriptEvent;
use serde::{Deserialize, Serialize};

use crate::error::ServerError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinTokens {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub director: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_ms: u64,
    pub tokens: JoinTokens,
    pub config: SessionConfig,
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    events: File,
}

pub fn sessions_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("sessions")
}

/// Reads a stored session without touching the files; a torn final line is ignored.
pub fn read_session(dir: &Path) -> Result<(SessionRecord, Vec<TranscriptEvent>), ServerError> {
    let (record, events, _) = read_session_parts(dir)?;
    Ok((record, events))
}

/// Every session directory under `data_dir`, sorted by id.
pub fn list_sessions(data_dir: &Path) -> Result<Vec<PathBuf>, ServerError> {
    let dir = sessions_dir(data_dir);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("session.json").exists())
        .collect();
    out.sort();
    Ok(out)
}

/// Record, complete events, and the length to truncate to if the last line is torn.
fn read_session_parts(dir: &Path) -> Result<(SessionRecord, Vec<TranscriptEvent>, Option<u64>), ServerError> {
    let record: SessionRecord = serde_json::from_slice(&fs::read(dir.join("session.json"))?)
        .map_err(|e| ServerError::Corrupt(format!("{}: {e}", dir.display())))?;
    let path = dir.join("events.jsonl");
    let raw = fs::read_to_string(&path).unwrap_or_default();
    let complete_len = raw.rfind('\n').map_or(0, |i| i + 1);
    let torn = (complete_len < raw.len()).then_some(complete_len as u64);
    let mut events = Vec::new();
    for (i, line) in raw[..complete_len].lines().enumerate() {
        let e = serde_json::from_str(line)
            .map_err(|e| ServerError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)))?;
        events.push(e);
    }
    Ok((record, events, torn))
}

impl SessionStore {
    pub fn create(data_dir: &Path, record: &SessionRecord) -> Result<Self, ServerError> {
        let dir = sessions_dir(data_dir).join(&record.session_id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("session.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(record).expect("record serializes"))?;
        fs::rename(&tmp, dir.join("session.json"))?;
        let events = OpenOptions::new().create(true).append(true).open(dir.join("events.jsonl"))?;
        Ok(SessionStore { dir, events })
    }

    /// Reads a session back. A torn final line (crash mid-write) is dropped and
    /// truncated away; any other unreadable line is an error.
    pub fn open(dir: &Path) -> Result<(Self, SessionRecord, Vec<TranscriptEvent>), ServerError> {
        let (record, events, torn) = read_session_parts(dir)?;
        let path = dir.join("events.jsonl");
        if let Some(complete_len) = torn {
            tracing::warn!(session = %record.session_id, "dropping torn final event line");
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(complete_len)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((SessionStore { dir: dir.to_path_buf(), events: file }, record, events))
    }

    pub fn append(&mut self, event: &TranscriptEvent) -> Result<(), ServerError> {
        let mut line = serde_json::to_vec(event).expect("event serializes");
        line.push(b'\n');
        self.events.write_all(&line)?;
        self.events.sync_data()?;
        Ok(())
    }

    pub fn events_path(&self) -> PathBuf {
        self.dir.join("events.jsonl")
    }
}
