//! Per-round dialogue records derived from a session's event log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::game::{BasketId, Condition, PromptVariant, RoundResult, SessionConfig};
use crate::participants::{ParticipantKind, Role};
use crate::transcript::{Payload, TranscriptEvent};

use super::CorpusError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub actor: Role,
    pub text: String,
    pub timestamp_ms: u64,
}

/// A sequence edit; `tile` is `None` for a clear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub timestamp_ms: u64,
    pub position: usize,
    pub tile: Option<usize>,
    pub basket_id: Option<BasketId>,
}

/// One pair's dialogue for one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub pair_id: String,
    pub condition: Condition,
    /// Grouping label (condition code or sweep name).
    pub label: String,
    pub round_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub director_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher_model: Option<String>,
    pub director_kind: ParticipantKind,
    pub matcher_kind: ParticipantKind,
    pub prompt_variant: PromptVariant,
    /// Target basket at each position, in the director's order.
    pub target_ids: Vec<BasketId>,
    pub utterances: Vec<Utterance>,
    pub placements: Vec<PlacementRecord>,
    pub result: Option<RoundResult>,
    /// Abort reason for rounds that ended without a submission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    pub start_ms: u64,
    pub duration_s: f64,
}

impl Dialogue {
    pub fn is_completed(&self) -> bool {
        self.result.is_some()
    }

    pub fn accuracy_pct(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.accuracy_pct)
    }

    pub fn director_utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.actor == Role::Director)
    }
}

/// Maximal run of consecutive messages from one participant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub actor: Role,
    pub utterances: Vec<Utterance>,
}

pub fn segment_turns(utterances: &[Utterance]) -> Vec<Turn> {
    let mut turns: Vec<Turn> = Vec::new();
    for u in utterances {
        match turns.last_mut() {
            Some(t) if t.actor == u.actor => t.utterances.push(u.clone()),
            _ => turns.push(Turn {
                actor: u.actor,
                utterances: vec![u.clone()],
            }),
        }
    }
    turns
}

pub fn flatten(turns: &[Turn]) -> Vec<Utterance> {
    turns.iter().flat_map(|t| t.utterances.iter().cloned()).collect()
}

/// Splits a session's events into one dialogue per started round.
pub fn dialogues_from_events(
    pair_id: &str,
    config: &SessionConfig,
    events: &[TranscriptEvent],
) -> Result<Vec<Dialogue>, CorpusError> {
    let state = crate::transcript::replay_game(config.clone(), events)?;
    let mut out: Vec<Dialogue> = Vec::new();
    let mut last_ts: Vec<u64> = Vec::new();
    for e in events {
        if let Payload::RoundStart { round } = e.payload {
            let rs = state
                .round(round)
                .ok_or(crate::game::GameError::RoundNotStarted(round))?;
            out.push(Dialogue {
                pair_id: pair_id.to_string(),
                condition: config.condition,
                label: config.label(),
                round_index: round,
                director_model: config.director.model_id.clone(),
                matcher_model: config.matcher.model_id.clone(),
                director_kind: config.director.kind,
                matcher_kind: config.matcher.kind,
                prompt_variant: config.prompt_variant,
                target_ids: rs.director_order.clone(),
                utterances: Vec::new(),
                placements: Vec::new(),
                result: rs.result.clone(),
                aborted: rs.aborted.clone(),
                start_ms: e.timestamp_ms,
                duration_s: 0.0,
            });
            last_ts.push(e.timestamp_ms);
            continue;
        }
        let (Some(d), Some(ts)) = (out.last_mut(), last_ts.last_mut()) else {
            continue;
        };
        let round_state = state.round(d.round_index).expect("round was started");
        match &e.payload {
            Payload::ChatMessage { text } => {
                if let Some(actor) = e.actor.role() {
                    d.utterances.push(Utterance {
                        actor,
                        text: text.clone(),
                        timestamp_ms: e.timestamp_ms,
                    });
                }
            }
            Payload::Placement { tile, position } => d.placements.push(PlacementRecord {
                timestamp_ms: e.timestamp_ms,
                position: *position,
                tile: Some(*tile),
                basket_id: round_state.basket_at_tile(*tile).cloned(),
            }),
            Payload::Clear { position } => d.placements.push(PlacementRecord {
                timestamp_ms: e.timestamp_ms,
                position: *position,
                tile: None,
                basket_id: None,
            }),
            Payload::Submit | Payload::Abort { round: Some(_), .. } => {}
            _ => continue,
        }
        *ts = e.timestamp_ms;
    }
    for (d, ts) in out.iter_mut().zip(last_ts) {
        d.duration_s = (ts - d.start_ms) as f64 / 1000.0;
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    for d in dialogues {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Dialogue>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn export_jsonl(path: &Path, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, dialogues)?;
    w.flush()?;
    Ok(())
}

pub fn import_jsonl(path: &Path) -> Result<Vec<Dialogue>, CorpusError> {
    read_jsonl(BufReader::new(File::open(path)?))
}
