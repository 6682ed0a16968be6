//! Completion-provider interface plus offline providers for tests and simulations.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::policy::{director_move, matcher_move, DirectorView, FeatureSet, MatcherView};
use super::prompt::{composite_ref, partner_prefix, ChatLine, SequenceStateMessage};
use super::spec::{ReasoningEffort, Role, ScriptedBehavior};
use crate::game::{round_permutations, SessionConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderMessage {
    pub role: MessageRole,
    pub content: String,
    /// Asset id of an attached image, resolved by the provider adapter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl ProviderMessage {
    pub fn new(role: MessageRole, content: impl Into<String>) -> Self {
        ProviderMessage {
            role,
            content: content.into(),
            image_ref: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<ProviderMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<ReasoningEffort>,
}

impl CompletionRequest {
    pub fn system_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == MessageRole::System)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider transport error: {0}")]
    Transport(String),
}

/// A chat-completion backend. Returns the raw assistant text.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

/// Returns canned responses in order and records every request it receives.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    responses: Mutex<VecDeque<Result<String, ProviderError>>>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl ReplayProvider {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(responses.into_iter().map(|s| Ok(s.into())))
    }

    pub fn with_results(responses: impl IntoIterator<Item = Result<String, ProviderError>>) -> Self {
        ReplayProvider {
            responses: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("replay lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("replay lock").len()
    }
}

impl CompletionProvider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.requests.lock().expect("replay lock").push(request.clone());
        self.responses
            .lock()
            .expect("replay lock")
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Transport("replay responses exhausted".into())))
    }
}

/// Feature-tag stand-ins for the composite images of one session: the director's
/// grid in position order and the matcher's pool in tile order, keyed by image ref.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolicAssets {
    pub seed: u64,
    views: BTreeMap<String, Vec<FeatureSet>>,
}

impl SymbolicAssets {
    pub fn for_session(config: &SessionConfig) -> Self {
        let mut views = BTreeMap::new();
        let features = |id: &crate::game::BasketId| -> FeatureSet {
            config
                .catalog
                .get(id)
                .map(|e| e.features.clone())
                .unwrap_or_default()
        };
        for k in 1..=config.n_rounds {
            let (director_order, pool_order) = round_permutations(config, k);
            views.insert(
                composite_ref(k, Role::Director),
                director_order.iter().map(features).collect(),
            );
            views.insert(composite_ref(k, Role::Matcher), pool_order.iter().map(features).collect());
        }
        SymbolicAssets { seed: config.seed, views }
    }

    pub fn view(&self, image_ref: &str) -> Option<&[FeatureSet]> {
        self.views.get(image_ref).map(Vec::as_slice)
    }
}

/// Offline stand-in for a multimodal model: reads the round, role and sequence state
/// out of the request, looks the composite image up in [`SymbolicAssets`] and answers
/// with the scripted policy in the schema the system prompt asks for.
#[derive(Debug)]
pub struct MockLlmProvider {
    assets: SymbolicAssets,
    behavior: ScriptedBehavior,
    calls: Mutex<usize>,
}

impl MockLlmProvider {
    pub fn new(assets: SymbolicAssets) -> Self {
        Self::with_behavior(assets, ScriptedBehavior::Perfect)
    }

    pub fn with_behavior(assets: SymbolicAssets, behavior: ScriptedBehavior) -> Self {
        MockLlmProvider {
            assets,
            behavior,
            calls: Mutex::new(0),
        }
    }

    pub fn for_session(config: &SessionConfig) -> Self {
        Self::new(SymbolicAssets::for_session(config))
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("mock lock")
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, String> {
        let (image, round_index, role) = request
            .messages
            .iter()
            .filter_map(|m| m.image_ref.as_deref())
            .find_map(|r| parse_composite_ref(r).map(|(k, role)| (r, k, role)))
            .ok_or("request carries no round composite")?;
        let view = self
            .assets
            .view(image)
            .ok_or_else(|| format!("unknown composite {image}"))?;
        let full = request.system_text().contains("\"reasoning\"");
        let history = chat_history(request, role);
        match role {
            Role::Director => {
                let dv = DirectorView {
                    round_index,
                    grid: view.iter().collect(),
                    behavior: self.behavior,
                    seed: self.assets.seed,
                };
                let mv = director_move(&dv, &history);
                let reply = if full {
                    json!({
                        "reasoning": {
                            "target_position": mv.position.unwrap_or(view.len()),
                            "shared_features": mv.shared,
                            "distinctive_features": mv.features,
                            "likely_confusions": mv.confusions,
                            "discriminative_strategy": "name every distinguishing feature of the basket"
                        },
                        "utterance": mv.utterance
                    })
                } else {
                    json!({ "utterance": mv.utterance })
                };
                Ok(reply.to_string())
            }
            Role::Matcher => {
                let state = request
                    .messages
                    .iter()
                    .rev()
                    .filter(|m| m.role == MessageRole::User)
                    .find_map(|m| SequenceStateMessage::parse_from_message(&m.content))
                    .ok_or("request carries no sequence state")?;
                let mv_view = MatcherView {
                    round_index,
                    pool: view.iter().collect(),
                    slots: &state.sequence_candidate_indices,
                    behavior: self.behavior,
                    seed: self.assets.seed,
                };
                let mv = matcher_move(&mv_view, &history);
                let selection = json!({
                    "candidate_index": mv.placement.map(|p| p.0),
                    "position": mv.placement.map(|p| p.1),
                    "ready_to_submit": mv.submit
                });
                let reply = if full {
                    json!({
                        "reasoning": {
                            "target_position": mv.target_position,
                            "shared_features": [],
                            "distinctive_features": mv.distinctive,
                            "best_guess_candidate_index": mv.best_guess,
                            "likely_confusions": mv.confusions,
                            "discriminative_question": ""
                        },
                        "utterance": mv.utterance,
                        "selection": selection
                    })
                } else {
                    json!({ "utterance": mv.utterance, "selection": selection })
                };
                Ok(reply.to_string())
            }
        }
    }
}

impl CompletionProvider for MockLlmProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        *self.calls.lock().expect("mock lock") += 1;
        self.respond(request).map_err(ProviderError::Transport)
    }
}

/// Inverse of [`composite_ref`].
pub fn parse_composite_ref(image_ref: &str) -> Option<(u32, Role)> {
    let rest = image_ref.strip_prefix("composites/round-")?;
    let (k, file) = rest.split_once('/')?;
    let role = match file {
        "director.png" => Role::Director,
        "matcher.png" => Role::Matcher,
        _ => return None,
    };
    Some((k.parse().ok()?, role))
}

/// Chat lines of the current round as seen in a request; rejected JSON attempts are skipped.
pub fn chat_history(request: &CompletionRequest, own_role: Role) -> Vec<ChatLine> {
    let partner = own_role.partner();
    let prefix = partner_prefix(partner);
    request
        .messages
        .iter()
        .filter_map(|m| match m.role {
            MessageRole::Assistant if !m.content.trim_start().starts_with('{') => Some(ChatLine {
                speaker: own_role,
                text: m.content.clone(),
            }),
            MessageRole::User => m.content.strip_prefix(prefix).map(|t| ChatLine {
                speaker: partner,
                text: t.to_string(),
            }),
            _ => None,
        })
        .collect()
}
