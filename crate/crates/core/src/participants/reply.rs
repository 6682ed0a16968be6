//! Strict JSON reply schemas for agent directors and matchers, and their validation.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};

use crate::game::{PromptVariant, RoundState, N_TARGETS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplyError {
    /// Not a single JSON object of the required shape.
    #[error("malformed reply: {0}")]
    Malformed(String),
    /// Well-formed JSON that breaks one of the reply rules.
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    /// `ready_to_submit` set while the sequence still has empty positions.
    #[error("ready_to_submit is true but {empty} position(s) are still empty")]
    IllegalSubmit { empty: usize },
}

/// Deserializes an `Option` that must be present (possibly `null`).
fn required_nullable<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectorReasoning {
    pub target_position: usize,
    pub shared_features: Vec<String>,
    pub distinctive_features: Vec<String>,
    pub likely_confusions: Vec<usize>,
    pub discriminative_strategy: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectorReply {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<DirectorReasoning>,
    pub utterance: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullDirectorWire {
    reasoning: DirectorReasoning,
    utterance: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimpleDirectorWire {
    utterance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcherReasoning {
    pub target_position: usize,
    pub shared_features: Vec<String>,
    pub distinctive_features: Vec<String>,
    #[serde(deserialize_with = "required_nullable")]
    pub best_guess_candidate_index: Option<usize>,
    pub likely_confusions: Vec<usize>,
    pub discriminative_question: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    #[serde(deserialize_with = "required_nullable")]
    pub candidate_index: Option<usize>,
    #[serde(deserialize_with = "required_nullable")]
    pub position: Option<usize>,
    pub ready_to_submit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatcherReply {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<MatcherReasoning>,
    pub utterance: String,
    pub selection: Selection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullMatcherWire {
    reasoning: MatcherReasoning,
    utterance: String,
    selection: Selection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimpleMatcherWire {
    utterance: String,
    selection: Selection,
}

fn decode<'a, T: Deserialize<'a>>(raw: &'a str) -> Result<T, ReplyError> {
    let trimmed = raw.trim();
    if !trimmed.starts_with('{') || !trimmed.ends_with('}') {
        return Err(ReplyError::Malformed(
            "reply must be a single JSON object with no text before or after it".into(),
        ));
    }
    serde_json::from_str(trimmed).map_err(|e| ReplyError::Malformed(e.to_string()))
}

fn violation<T>(msg: impl Into<String>) -> Result<T, ReplyError> {
    Err(ReplyError::SchemaViolation(msg.into()))
}

static BASKET_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bbaskets?\s*#?\s*(\d{1,2})\b").unwrap());

static INDEX_MENTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(candidate|tile|index|id)\s*(#|no\.?|number)?\s*\d+\b|\.(png|jpe?g|gif|webp)\b")
        .unwrap()
});

fn check_utterance(utterance: &str) -> Result<(), ReplyError> {
    if utterance.trim().is_empty() {
        return violation("utterance must be non-empty");
    }
    Ok(())
}

/// Parses a director reply in the full (reasoning + utterance) schema.
pub fn parse_director_reply(raw: &str) -> Result<DirectorReply, ReplyError> {
    parse_director_reply_with(raw, PromptVariant::Full)
}

pub fn parse_director_reply_with(raw: &str, variant: PromptVariant) -> Result<DirectorReply, ReplyError> {
    let reply = match variant {
        PromptVariant::Full => {
            let w: FullDirectorWire = decode(raw)?;
            DirectorReply {
                reasoning: Some(w.reasoning),
                utterance: w.utterance,
            }
        }
        PromptVariant::Simple => {
            let w: SimpleDirectorWire = decode(raw)?;
            DirectorReply {
                reasoning: None,
                utterance: w.utterance,
            }
        }
    };
    check_utterance(&reply.utterance)?;
    if let Some(r) = &reply.reasoning {
        if !(1..=N_TARGETS).contains(&r.target_position) {
            return violation(format!("target_position {} outside 1-12", r.target_position));
        }
        if let Some(bad) = r.likely_confusions.iter().find(|p| !(1..=N_TARGETS).contains(*p)) {
            return violation(format!("likely_confusions entry {bad} outside 1-12"));
        }
        if r.likely_confusions.contains(&r.target_position) {
            return violation("likely_confusions must not include target_position");
        }
    }
    let mentioned: BTreeSet<usize> = BASKET_MENTION
        .captures_iter(&reply.utterance)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    if mentioned.len() > 1 {
        return violation(format!(
            "utterance describes more than one basket ({mentioned:?}); describe one basket per message"
        ));
    }
    if let (Some(r), Some(&m)) = (&reply.reasoning, mentioned.iter().next()) {
        if m != r.target_position {
            return violation(format!(
                "utterance names basket {m} but target_position is {}",
                r.target_position
            ));
        }
    }
    Ok(reply)
}

/// Ordering rule: a director may revisit earlier baskets but never skip ahead of
/// `next_position`, the lowest basket not yet described (1 at round start).
pub fn check_director_order(reply: &DirectorReply, next_position: usize) -> Result<(), ReplyError> {
    if let Some(r) = &reply.reasoning {
        if r.target_position > next_position {
            return violation(format!(
                "target_position {} skips ahead; describe basket {next_position} next",
                r.target_position
            ));
        }
    }
    Ok(())
}

/// Parses a matcher reply in the full schema and validates it against `round`.
pub fn parse_matcher_reply(raw: &str, round: &RoundState) -> Result<MatcherReply, ReplyError> {
    parse_matcher_reply_with(raw, round, PromptVariant::Full)
}

pub fn parse_matcher_reply_with(
    raw: &str,
    round: &RoundState,
    variant: PromptVariant,
) -> Result<MatcherReply, ReplyError> {
    let reply = match variant {
        PromptVariant::Full => {
            let w: FullMatcherWire = decode(raw)?;
            MatcherReply {
                reasoning: Some(w.reasoning),
                utterance: w.utterance,
                selection: w.selection,
            }
        }
        PromptVariant::Simple => {
            let w: SimpleMatcherWire = decode(raw)?;
            MatcherReply {
                reasoning: None,
                utterance: w.utterance,
                selection: w.selection,
            }
        }
    };
    validate_matcher_reply(&reply, round)?;
    Ok(reply)
}

fn validate_matcher_reply(reply: &MatcherReply, round: &RoundState) -> Result<(), ReplyError> {
    let pool = round.pool_size();
    let n_pos = round.n_positions();
    let in_pool = |i: usize| (1..=pool).contains(&i);
    let sel = &reply.selection;

    check_utterance(&reply.utterance)?;
    if INDEX_MENTION.is_match(&reply.utterance) {
        return violation("utterance must not mention candidate indices, ids or filenames");
    }
    if let Some(c) = sel.candidate_index {
        if !in_pool(c) {
            return violation(format!("selection.candidate_index {c} outside 1-{pool}"));
        }
    }
    if let Some(p) = sel.position {
        if !(1..=n_pos).contains(&p) {
            return violation(format!("selection.position {p} outside 1-{n_pos}"));
        }
    }
    if let Some(r) = &reply.reasoning {
        if !(1..=n_pos).contains(&r.target_position) {
            return violation(format!("target_position {} outside 1-{n_pos}", r.target_position));
        }
        if let Some(g) = r.best_guess_candidate_index {
            if !in_pool(g) {
                return violation(format!("best_guess_candidate_index {g} outside 1-{pool}"));
            }
        }
        if let Some(bad) = r.likely_confusions.iter().find(|c| !in_pool(**c)) {
            return violation(format!("likely_confusions entry {bad} outside 1-{pool}"));
        }
        if let Some(g) = r.best_guess_candidate_index {
            if r.likely_confusions.contains(&g) {
                return violation("likely_confusions must not include best_guess_candidate_index");
            }
        }
        if let Some(c) = sel.candidate_index {
            if r.likely_confusions.contains(&c) {
                return violation("likely_confusions must not include selection.candidate_index");
            }
            if r.best_guess_candidate_index != Some(c) {
                return violation(
                    "best_guess_candidate_index must equal selection.candidate_index when committing",
                );
            }
            if let Some(p) = sel.position {
                if p != r.target_position {
                    return violation(format!(
                        "selection.position {p} must equal reasoning.target_position {}",
                        r.target_position
                    ));
                }
            }
        }
    }

    let mut after = round.clone();
    if let Some((tile, position)) = resolve_placement(sel, round)? {
        after
            .apply_placement(tile, position)
            .map_err(|e| ReplyError::SchemaViolation(e.to_string()))?;
    }
    if sel.ready_to_submit && !after.can_submit() {
        return Err(ReplyError::IllegalSubmit {
            empty: after.n_positions() - after.filled_count(),
        });
    }
    Ok(())
}

/// Tile and position a selection commits to; a null position means the lowest empty one.
fn resolve_placement(sel: &Selection, round: &RoundState) -> Result<Option<(usize, usize)>, ReplyError> {
    let Some(tile) = sel.candidate_index else {
        return Ok(None);
    };
    let position = match sel.position {
        Some(p) => p,
        None => match round.lowest_empty() {
            Some(p) => p,
            None => return violation("selection.position is null but no position is empty"),
        },
    };
    Ok(Some((tile, position)))
}

impl MatcherReply {
    /// Placement this reply commits to on `round`, if any.
    pub fn placement(&self, round: &RoundState) -> Option<(usize, usize)> {
        resolve_placement(&self.selection, round).ok().flatten()
    }
}
