//! Append-only transcript events: the record every other artifact derives from.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::game::{GameError, RoundResult, SessionState};
use crate::participants::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Director,
    Matcher,
    System,
}

impl Actor {
    pub fn role(self) -> Option<Role> {
        match self {
            Actor::Director => Some(Role::Director),
            Actor::Matcher => Some(Role::Matcher),
            Actor::System => None,
        }
    }
}

impl From<Role> for Actor {
    fn from(role: Role) -> Self {
        match role {
            Role::Director => Actor::Director,
            Role::Matcher => Actor::Matcher,
        }
    }
}

/// Post-task questionnaire. Likert items are 1-5, human-likeness is 0-100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyResponse {
    pub partner_capability: u8,
    pub partner_helpfulness: u8,
    pub partner_understanding: u8,
    pub partner_adaptability: u8,
    pub collaboration_improvement: u8,
    pub perceived_human_likeness: u8,
    pub ai_familiarity: u8,
    pub ai_usage_frequency: u8,
    #[serde(default)]
    pub free_text: String,
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), String> {
        let likert = [
            ("partner_capability", self.partner_capability),
            ("partner_helpfulness", self.partner_helpfulness),
            ("partner_understanding", self.partner_understanding),
            ("partner_adaptability", self.partner_adaptability),
            ("collaboration_improvement", self.collaboration_improvement),
            ("ai_familiarity", self.ai_familiarity),
            ("ai_usage_frequency", self.ai_usage_frequency),
        ];
        for (name, v) in likert {
            if !(1..=5).contains(&v) {
                return Err(format!("{name} must be 1-5, got {v}"));
            }
        }
        if self.perceived_human_likeness > 100 {
            return Err(format!(
                "perceived_human_likeness must be 0-100, got {}",
                self.perceived_human_likeness
            ));
        }
        Ok(())
    }
}

/// Event payloads. Serialized with a `type` tag, e.g.
/// `{"type":"Placement","tile":5,"position":1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Payload {
    ChatMessage { text: String },
    TypingStart,
    TypingStop,
    Placement { tile: usize, position: usize },
    Clear { position: usize },
    Submit,
    RoundStart { round: u32 },
    RoundFeedback { round: u32, result: RoundResult },
    AttentionCheck { round: u32, prompt: String },
    AttentionAck { round: u32 },
    SurveyOpen,
    SurveyResponse(SurveyResponse),
    Joined { role: Role },
    Abort {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round: Option<u32>,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::ChatMessage { .. } => "ChatMessage",
            Payload::TypingStart => "TypingStart",
            Payload::TypingStop => "TypingStop",
            Payload::Placement { .. } => "Placement",
            Payload::Clear { .. } => "Clear",
            Payload::Submit => "Submit",
            Payload::RoundStart { .. } => "RoundStart",
            Payload::RoundFeedback { .. } => "RoundFeedback",
            Payload::AttentionCheck { .. } => "AttentionCheck",
            Payload::AttentionAck { .. } => "AttentionAck",
            Payload::SurveyOpen => "SurveyOpen",
            Payload::SurveyResponse(_) => "SurveyResponse",
            Payload::Joined { .. } => "Joined",
            Payload::Abort { .. } => "Abort",
        }
    }

    /// Payloads only the service itself may emit.
    pub fn is_system_only(&self) -> bool {
        matches!(
            self,
            Payload::RoundStart { .. }
                | Payload::RoundFeedback { .. }
                | Payload::AttentionCheck { .. }
                | Payload::SurveyOpen
                | Payload::Joined { .. }
                | Payload::Abort { .. }
        )
    }

    /// Payloads that manipulate the matcher's sequence.
    pub fn is_matcher_only(&self) -> bool {
        matches!(self, Payload::Placement { .. } | Payload::Clear { .. } | Payload::Submit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub session_id: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    pub actor: Actor,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("chat message text is empty")]
    EmptyChat,
    #[error("sequence number {got} does not follow {last}")]
    NonMonotoneSeq { last: u64, got: u64 },
    #[error("event belongs to session {0}")]
    WrongSession(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// In-memory append-only log for one session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    session_id: String,
    events: Vec<TranscriptEvent>,
}

impl EventLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        EventLog {
            session_id: session_id.into(),
            events: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn append(
        &mut self,
        actor: Actor,
        payload: Payload,
        timestamp_ms: u64,
    ) -> Result<&TranscriptEvent, EventError> {
        if let Payload::ChatMessage { text } = &payload {
            if text.trim().is_empty() {
                return Err(EventError::EmptyChat);
            }
        }
        let event = TranscriptEvent {
            session_id: self.session_id.clone(),
            seq: self.last_seq() + 1,
            timestamp_ms,
            actor,
            payload,
        };
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    /// Appends an already-sequenced event (e.g. read back from disk).
    pub fn push_existing(&mut self, event: TranscriptEvent) -> Result<(), EventError> {
        if event.session_id != self.session_id {
            return Err(EventError::WrongSession(event.session_id));
        }
        if event.seq <= self.last_seq() {
            return Err(EventError::NonMonotoneSeq {
                last: self.last_seq(),
                got: event.seq,
            });
        }
        self.events.push(event);
        Ok(())
    }
}

/// Applies the game-relevant part of an event to the session state.
/// Chat, typing, survey and lifecycle events leave the game state untouched.
pub fn apply_to_game(state: &mut SessionState, event: &TranscriptEvent) -> Result<(), GameError> {
    match &event.payload {
        Payload::RoundStart { round } => {
            state.start_round(*round)?;
        }
        Payload::Placement { tile, position } => {
            current_round_mut(state)?.apply_placement(*tile, *position)?;
        }
        Payload::Clear { position } => {
            current_round_mut(state)?.clear_position(*position)?;
        }
        Payload::Submit => {
            current_round_mut(state)?.score_round()?;
        }
        Payload::Abort {
            round: Some(round),
            reason,
        } => {
            state.round_mut(*round)?.abort(reason.clone())?;
        }
        _ => {}
    }
    Ok(())
}

/// Appends an event and applies it to the game state.
pub fn record(
    state: &mut SessionState,
    log: &mut EventLog,
    clock: &dyn Clock,
    actor: Actor,
    payload: Payload,
) -> Result<TranscriptEvent, EventError> {
    let mut probe = state.clone();
    let event = TranscriptEvent {
        session_id: log.session_id().to_string(),
        seq: log.last_seq() + 1,
        timestamp_ms: clock.now_ms(),
        actor,
        payload,
    };
    apply_to_game(&mut probe, &event)?;
    let event = log.append(event.actor, event.payload, event.timestamp_ms)?.clone();
    *state = probe;
    Ok(event)
}

fn current_round_mut(state: &mut SessionState) -> Result<&mut crate::game::RoundState, GameError> {
    let k = state
        .current_round()
        .map(|r| r.round_index)
        .ok_or(GameError::RoundNotStarted(1))?;
    state.round_mut(k)
}

/// Rebuilds the game state from a config and an event sequence.
pub fn replay_game(
    config: crate::game::SessionConfig,
    events: &[TranscriptEvent],
) -> Result<SessionState, GameError> {
    let mut state = SessionState::new(config)?;
    for e in events {
        apply_to_game(&mut state, e)?;
    }
    Ok(state)
}

/// Source of event timestamps (milliseconds since the Unix epoch).
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;

    /// Lets virtual time pass, e.g. a simulated participant's think time.
    fn advance(&self, _ms: u64) {}
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// Virtual clock for simulations; only moves when told to.
#[derive(Debug, Default)]
pub struct MockClock {
    now: AtomicU64,
}

impl MockClock {
    /// Fixed epoch the simulator starts every session at (2025-01-01T00:00:00Z).
    pub const EPOCH_MS: u64 = 1_735_689_600_000;

    pub fn new(start_ms: u64) -> Self {
        MockClock {
            now: AtomicU64::new(start_ms),
        }
    }

}

impl Clock for MockClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}
