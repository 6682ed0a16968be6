//! Referring-expression extraction (tag-based and model-based) and its validation.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::game::BasketId;
use crate::metrics::rouge_l_f1;
use crate::participants::policy::tagged_phrases;
use crate::participants::{
    partner_prefix, CompletionProvider, CompletionRequest, MessageRole, ProviderError, ProviderMessage, Role,
};

use super::{CorpusError, Dialogue};

pub const RE_EXTRACTION_PROMPT: &str = include_str!("../../resources/prompts/re_extraction.txt");

/// Separator between several phrases for the same basket.
pub const PHRASE_JOINER: &str = "; ";

/// One RE per target basket for one pair and round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferringExpressionSet {
    pub pair_id: String,
    pub round_index: u32,
    pub res: BTreeMap<BasketId, String>,
}

impl ReferringExpressionSet {
    pub fn get(&self, id: &BasketId) -> Option<&str> {
        self.res.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.res.len()
    }

    pub fn is_empty(&self) -> bool {
        self.res.is_empty()
    }
}

static TAGGED_POSITION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:basket (\d+):|let me clarify basket (\d+) again:)").unwrap());

/// `(position, phrase)` pairs carried by tagged director lines.
fn tagged_mentions<'a>(lines: impl Iterator<Item = &'a str>) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for text in lines {
        let Some(c) = TAGGED_POSITION.captures(text.trim_start()) else {
            continue;
        };
        let Some(pos) = c.get(1).or_else(|| c.get(2)).and_then(|m| m.as_str().parse().ok()) else {
            continue;
        };
        for phrase in tagged_phrases(text) {
            out.push((pos, phrase));
        }
    }
    out
}

fn group_by_position(mentions: Vec<(usize, String)>, n: usize) -> Result<Vec<String>, usize> {
    let mut grouped: Vec<Vec<String>> = vec![Vec::new(); n];
    for (pos, phrase) in mentions {
        if (1..=n).contains(&pos) && !phrase.is_empty() {
            grouped[pos - 1].push(phrase);
        }
    }
    grouped
        .into_iter()
        .enumerate()
        .map(|(i, g)| if g.is_empty() { Err(i + 1) } else { Ok(g.join(PHRASE_JOINER)) })
        .collect()
}

/// Exact REs from the `«...»` tags scripted directors emit. Repair wording around
/// the tags is dropped; several phrases for one basket are joined with `"; "`.
pub fn extract_res_tagged(dialogue: &Dialogue) -> Result<ReferringExpressionSet, CorpusError> {
    let mentions = tagged_mentions(dialogue.director_utterances().map(|u| u.text.as_str()));
    if mentions.is_empty() {
        return Err(CorpusError::Untagged);
    }
    let phrases = group_by_position(mentions, dialogue.target_ids.len())
        .map_err(|pos| CorpusError::MissingBasket(format!("position {pos}")))?;
    Ok(ReferringExpressionSet {
        pair_id: dialogue.pair_id.clone(),
        round_index: dialogue.round_index,
        res: dialogue.target_ids.iter().cloned().zip(phrases).collect(),
    })
}

/// Transcript as shown to the extraction model, one `ROLE: text` line per message.
pub fn render_transcript(dialogue: &Dialogue) -> String {
    dialogue
        .utterances
        .iter()
        .map(|u| format!("{}{}", partner_prefix(u.actor), u.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn extraction_prompt(dialogue: &Dialogue, n_objects: usize) -> String {
    RE_EXTRACTION_PROMPT
        .replace("<num_objects>", &n_objects.to_string())
        .replace("<transcript>", &render_transcript(dialogue))
}

/// Parses an `{"object_#1": "...", ...}` reply; the object must stand alone.
pub fn parse_extraction_reply(raw: &str, n_objects: usize) -> Result<Vec<String>, String> {
    let trimmed = raw.trim();
    if !trimmed.starts_with('{') || !trimmed.ends_with('}') {
        return Err("output only the JSON object, with no text before or after it".into());
    }
    let map: BTreeMap<String, String> = serde_json::from_str(trimmed).map_err(|e| e.to_string())?;
    let expected: Vec<String> = (1..=n_objects).map(|i| format!("object_#{i}")).collect();
    if let Some(extra) = map.keys().find(|k| !expected.contains(k)) {
        return Err(format!("unexpected key {extra}"));
    }
    expected
        .iter()
        .map(|k| map.get(k).cloned().ok_or_else(|| format!("missing key {k}")))
        .collect()
}

/// Model-based extraction with retries; each retry carries a corrective notice.
pub fn extract_res_llm(
    dialogue: &Dialogue,
    n_objects: usize,
    provider: &dyn CompletionProvider,
    model_id: &str,
    max_attempts: usize,
) -> Result<ReferringExpressionSet, CorpusError> {
    if !dialogue.utterances.iter().any(|u| u.actor == Role::Director) {
        return Err(CorpusError::NoDirector);
    }
    let mut request = CompletionRequest {
        model_id: model_id.to_string(),
        messages: vec![ProviderMessage::new(MessageRole::User, extraction_prompt(dialogue, n_objects))],
        reasoning_effort: None,
    };
    let attempts = max_attempts.max(1);
    let mut last_error = String::new();
    for _ in 0..attempts {
        let raw = match provider.complete(&request) {
            Ok(raw) => raw,
            Err(ProviderError::Timeout) => return Err(CorpusError::Provider(ProviderError::Timeout.to_string())),
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        match parse_extraction_reply(&raw, n_objects) {
            Ok(phrases) => {
                return Ok(ReferringExpressionSet {
                    pair_id: dialogue.pair_id.clone(),
                    round_index: dialogue.round_index,
                    res: dialogue.target_ids.iter().cloned().zip(phrases).collect(),
                })
            }
            Err(e) => {
                last_error = e.clone();
                request.messages.push(ProviderMessage::new(MessageRole::Assistant, raw));
                request.messages.push(ProviderMessage::new(
                    MessageRole::User,
                    format!("Your previous reply was rejected: {e}. Output only the JSON object."),
                ));
            }
        }
    }
    Err(CorpusError::MalformedReply { attempts, last_error })
}

/// Mean ROUGE-L F1 over baskets between predicted and gold REs.
pub fn validate_extraction(
    predicted: &ReferringExpressionSet,
    gold: &ReferringExpressionSet,
) -> Result<f64, CorpusError> {
    if predicted.res.keys().ne(gold.res.keys()) {
        return Err(CorpusError::KeyMismatch);
    }
    if gold.is_empty() {
        return Err(CorpusError::KeyMismatch);
    }
    let total: f64 = gold
        .res
        .iter()
        .map(|(id, g)| rouge_l_f1::<f64>(g, &predicted.res[id]))
        .sum();
    Ok(total / gold.len() as f64)
}

/// Mean F1 over every (pair, round) present in both collections.
pub fn validate_corpus(
    predicted: &[ReferringExpressionSet],
    gold: &[ReferringExpressionSet],
) -> Result<f64, CorpusError> {
    let index: BTreeMap<(&str, u32), &ReferringExpressionSet> =
        gold.iter().map(|g| ((g.pair_id.as_str(), g.round_index), g)).collect();
    let mut scores = Vec::new();
    for p in predicted {
        let g = index
            .get(&(p.pair_id.as_str(), p.round_index))
            .ok_or(CorpusError::KeyMismatch)?;
        scores.push(validate_extraction(p, g)?);
    }
    if scores.is_empty() {
        return Err(CorpusError::KeyMismatch);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Offline extractor: reads the transcript out of the extraction prompt and returns
/// the tagged phrases of each basket, as an exact extractive model would.
#[derive(Debug, Default)]
pub struct TaggedExtractionProvider;

static N_OBJECTS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"There are exactly (\d+) target objects").unwrap());

impl CompletionProvider for TaggedExtractionProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let prompt = request
            .messages
            .iter()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.content.as_str())
            .ok_or_else(|| ProviderError::Transport("no prompt".into()))?;
        let n: usize = N_OBJECTS
            .captures(prompt)
            .and_then(|c| c[1].parse().ok())
            .ok_or_else(|| ProviderError::Transport("object count not found".into()))?;
        let director = partner_prefix(Role::Director);
        let transcript = prompt
            .split_once("Transcript:")
            .map_or("", |(_, rest)| rest);
        let lines = transcript.lines().filter_map(|l| l.strip_prefix(director));
        let phrases = group_by_position(tagged_mentions(lines), n)
            .map_err(|pos| ProviderError::Transport(format!("no description for object {pos}")))?;
        let map: serde_json::Map<String, serde_json::Value> = phrases
            .into_iter()
            .enumerate()
            .map(|(i, p)| (format!("object_#{}", i + 1), serde_json::Value::String(p)))
            .collect();
        Ok(serde_json::Value::Object(map).to_string())
    }
}
