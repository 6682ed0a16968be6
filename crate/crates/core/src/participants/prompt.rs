//! System prompt and per-turn context assembly for agent participants.

use serde::{Deserialize, Serialize};

use super::provider::{CompletionRequest, MessageRole, ProviderMessage};
use super::spec::{ParticipantSpec, Role};
use crate::game::{PromptVariant, RoundState, SessionState};

const TASK_BACKGROUND: &str = include_str!("../../resources/prompts/task_background.txt");
const DIRECTOR_BASE: &str = include_str!("../../resources/prompts/director_base.txt");
const DIRECTOR_ROUND_WRAPPER: &str = include_str!("../../resources/prompts/director_round_wrapper.txt");
const DIRECTOR_ROUND_START: &str = include_str!("../../resources/prompts/director_round_start.txt");
const DIRECTOR_PRAGMATIC: &str = include_str!("../../resources/prompts/director_pragmatic.txt");
const DIRECTOR_SIMPLE_OUTPUT: &str = include_str!("../../resources/prompts/director_simple_output.txt");
const MATCHER_BASE: &str = include_str!("../../resources/prompts/matcher_base.txt");
const MATCHER_ROUND_WRAPPER: &str = include_str!("../../resources/prompts/matcher_round_wrapper.txt");
const MATCHER_SEQUENCE: &str = include_str!("../../resources/prompts/matcher_sequence.txt");
const MATCHER_PRAGMATIC: &str = include_str!("../../resources/prompts/matcher_pragmatic.txt");
const MATCHER_SCAFFOLDING: &str = include_str!("../../resources/prompts/matcher_scaffolding.txt");
const MATCHER_SIMPLE_OUTPUT: &str = include_str!("../../resources/prompts/matcher_simple_output.txt");

/// Header that opens the text-only summary of the previous round's score.
pub const FEEDBACK_HEADER: &str = "PREVIOUS ROUND FEEDBACK";

/// Prefix marking a partner's chat line inside a provider request.
pub fn partner_prefix(partner: Role) -> &'static str {
    match partner {
        Role::Director => "DIRECTOR: ",
        Role::Matcher => "MATCHER: ",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextMessage {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl ContextMessage {
    fn text(text: String) -> Self {
        ContextMessage { text, image_ref: None }
    }
}

/// One chat message of the current round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatLine {
    pub speaker: Role,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    /// Round context sent before the chat history.
    pub context_messages: Vec<ContextMessage>,
    pub history: Vec<ChatLine>,
    /// Per-turn state injected after the history (the matcher's sequence state).
    pub turn_messages: Vec<ContextMessage>,
}

impl PromptBundle {
    /// Flattens the bundle into provider messages from the point of view of `own_role`.
    pub fn to_request(&self, spec: &ParticipantSpec, own_role: Role) -> CompletionRequest {
        let mut messages = vec![ProviderMessage::new(MessageRole::System, self.system_text.clone())];
        let user_msg = |m: &ContextMessage| ProviderMessage {
            role: MessageRole::User,
            content: m.text.clone(),
            image_ref: m.image_ref.clone(),
        };
        messages.extend(self.context_messages.iter().map(user_msg));
        for line in &self.history {
            if line.speaker == own_role {
                messages.push(ProviderMessage::new(MessageRole::Assistant, line.text.clone()));
            } else {
                messages.push(ProviderMessage::new(
                    MessageRole::User,
                    format!("{}{}", partner_prefix(line.speaker), line.text),
                ));
            }
        }
        messages.extend(self.turn_messages.iter().map(user_msg));
        CompletionRequest {
            model_id: spec.model_id.clone().unwrap_or_default(),
            messages,
            reasoning_effort: spec.reasoning_effort,
        }
    }
}

/// Asset id of the prebuilt composite image for a round and role.
pub fn composite_ref(round_index: u32, role: Role) -> String {
    format!("composites/round-{round_index}/{role}.png")
}

fn fill(template: &str, session: &SessionState, round_index: u32) -> String {
    template
        .replace("<ROUND_NUMBER>", &round_index.to_string())
        .replace("<N_ROUNDS>", &session.n_rounds().to_string())
        .replace("<POOL_SIZE>", &session.config().catalog.pool_size().to_string())
}

fn join_blocks(blocks: &[&str]) -> String {
    blocks.iter().map(|b| b.trim_end()).collect::<Vec<_>>().join("\n\n")
}

fn feedback_message(session: &SessionState, round_index: u32) -> Option<ContextMessage> {
    let prev = session.round(round_index.checked_sub(1)?)?;
    let text = match (&prev.result, &prev.aborted) {
        (Some(res), _) => {
            let wrong: Vec<String> = res
                .per_position_correct
                .iter()
                .enumerate()
                .filter(|(_, ok)| !**ok)
                .map(|(i, _)| (i + 1).to_string())
                .collect();
            let wrong = if wrong.is_empty() {
                "none".to_string()
            } else {
                wrong.join(", ")
            };
            format!(
                "{FEEDBACK_HEADER} (round {}): score {:.1}% ({} of {} correct). Incorrect positions: {wrong}.",
                prev.round_index,
                res.accuracy_pct,
                res.n_correct(),
                res.per_position_correct.len()
            )
        }
        (None, Some(reason)) => format!(
            "{FEEDBACK_HEADER} (round {}): the round ended without a submission ({reason}).",
            prev.round_index
        ),
        (None, None) => return None,
    };
    Some(ContextMessage::text(text))
}

/// Director prompt for `round`; `history` is the round's chat so far.
pub fn build_director_prompt(session: &SessionState, round: &RoundState, history: &[ChatLine]) -> PromptBundle {
    let k = round.round_index;
    let variant = session.config().prompt_variant;
    let mut blocks = vec![TASK_BACKGROUND, DIRECTOR_BASE];
    match variant {
        PromptVariant::Full => blocks.push(DIRECTOR_PRAGMATIC),
        PromptVariant::Simple => blocks.push(DIRECTOR_SIMPLE_OUTPUT),
    }
    let system_text = fill(&join_blocks(&blocks), session, k);

    let mut context_messages: Vec<ContextMessage> = feedback_message(session, k).into_iter().collect();
    context_messages.push(ContextMessage {
        text: fill(DIRECTOR_ROUND_WRAPPER.trim_end(), session, k),
        image_ref: Some(composite_ref(k, Role::Director)),
    });
    context_messages.push(ContextMessage::text(fill(DIRECTOR_ROUND_START.trim_end(), session, k)));
    PromptBundle {
        system_text,
        context_messages,
        history: history.to_vec(),
        turn_messages: Vec::new(),
    }
}

/// Matcher prompt for `round`, including a fresh sequence-state message.
pub fn build_matcher_prompt(session: &SessionState, round: &RoundState, history: &[ChatLine]) -> PromptBundle {
    let k = round.round_index;
    let variant = session.config().prompt_variant;
    let mut blocks = vec![TASK_BACKGROUND, MATCHER_BASE];
    match variant {
        PromptVariant::Full => blocks.extend([MATCHER_PRAGMATIC, MATCHER_SCAFFOLDING]),
        PromptVariant::Simple => blocks.push(MATCHER_SIMPLE_OUTPUT),
    }
    let system_text = fill(&join_blocks(&blocks), session, k);

    let mut context_messages: Vec<ContextMessage> = feedback_message(session, k).into_iter().collect();
    context_messages.push(ContextMessage {
        text: fill(MATCHER_ROUND_WRAPPER.trim_end(), session, k),
        image_ref: Some(composite_ref(k, Role::Matcher)),
    });
    let state = SequenceStateMessage::from_round(round);
    let turn_messages = vec![ContextMessage::text(format!(
        "{}\n\n{}",
        MATCHER_SEQUENCE.trim_end(),
        serde_json::to_string_pretty(&state).expect("sequence state serializes")
    ))];
    PromptBundle {
        system_text,
        context_messages,
        history: history.to_vec(),
        turn_messages,
    }
}

/// Header of the per-turn sequence-state message.
pub fn sequence_state_header() -> &'static str {
    MATCHER_SEQUENCE.lines().next().unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSlot {
    pub position: usize,
    pub candidate_index: Option<usize>,
    pub image: Option<String>,
    #[serde(rename = "originalPosition")]
    pub original_position: Option<usize>,
}

/// The matcher's current sequence, in both array and per-slot form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceStateMessage {
    pub sequence_candidate_indices: Vec<Option<usize>>,
    pub sequence_slots: Vec<SequenceSlot>,
}

impl SequenceStateMessage {
    pub fn from_round(round: &RoundState) -> Self {
        let sequence_slots = round
            .slots
            .iter()
            .enumerate()
            .map(|(i, tile)| SequenceSlot {
                position: i + 1,
                candidate_index: *tile,
                image: None,
                original_position: None,
            })
            .collect();
        SequenceStateMessage {
            sequence_candidate_indices: round.slots.clone(),
            sequence_slots,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.sequence_candidate_indices.len() == self.sequence_slots.len()
            && self
                .sequence_slots
                .iter()
                .zip(&self.sequence_candidate_indices)
                .enumerate()
                .all(|(i, (slot, idx))| slot.position == i + 1 && slot.candidate_index == *idx)
    }

    /// Extracts the state JSON from a rendered sequence-state message.
    pub fn parse_from_message(text: &str) -> Option<Self> {
        let start = text.find('{')?;
        serde_json::from_str(&text[start..]).ok()
    }
}
