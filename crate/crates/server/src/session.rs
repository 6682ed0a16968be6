//! One live session: game state, event log, lifecycle phase and agent partners.
//!
//! Every change goes through the event log. The lifecycle phase is a fold over the
//! log, so a session read back from disk resumes exactly where it stopped.

use std::sync::Arc;

use refgame_core::game::{RoundState, SessionConfig, SessionState};
use refgame_core::participants::{
    abort_round, apply_action, build_agent, round_history, submit_round, Action, Agent, AgentError, ChatLine,
    CompletionProvider, ParticipantKind, Role, DEFAULT_MAX_ATTEMPTS,
};
use refgame_core::transcript::{apply_to_game, record, Actor, Clock, EventLog, Payload, TranscriptEvent};
use serde::Serialize;
use tokio::sync::broadcast;

use crate::error::ServerError;
use crate::store::{SessionRecord, SessionStore};

/// Static acknowledgement prompt shown between rounds.
pub const ATTENTION_PROMPT: &str = "Round complete. Please confirm you are ready to continue to the next round.";

pub const EXPIRY_REASON: &str = "session expired before both participants joined";

const BROADCAST_CAPACITY: usize = 1024;

fn idx(role: Role) -> usize {
    match role {
        Role::Director => 0,
        Role::Matcher => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    /// Waiting for every human participant to join.
    Waiting,
    Playing { round: u32 },
    /// Between rounds: attention check sent, waiting for acknowledgements.
    Between { round: u32, check_sent: bool, acked: [bool; 2] },
    Survey { open: bool, done: [bool; 2] },
    Finished,
    Expired,
}

/// Lifecycle facts derived from the event log.
#[derive(Clone, Debug, PartialEq)]
pub struct Lifecycle {
    pub phase: Phase,
    pub joined: [bool; 2],
    /// Chat messages in the current round.
    pub chat_in_round: usize,
    pub last_speaker: Option<Role>,
}

impl Lifecycle {
    fn new() -> Self {
        Lifecycle {
            phase: Phase::Waiting,
            joined: [false; 2],
            chat_in_round: 0,
            last_speaker: None,
        }
    }

    fn observe(&mut self, event: &TranscriptEvent, config: &SessionConfig) {
        let human = |r: Role| config.participant(r).kind == ParticipantKind::Human;
        match (&event.payload, &mut self.phase) {
            (Payload::Joined { role }, _) => self.joined[idx(*role)] = true,
            (Payload::RoundStart { round }, _) => {
                self.phase = Phase::Playing { round: *round };
                self.chat_in_round = 0;
                self.last_speaker = None;
            }
            (Payload::ChatMessage { .. }, Phase::Playing { .. }) => {
                self.chat_in_round += 1;
                self.last_speaker = event.actor.role();
            }
            (Payload::RoundFeedback { round, .. }, _) | (Payload::Abort { round: Some(round), .. }, _) => {
                self.phase = if *round < config.n_rounds {
                    Phase::Between {
                        round: *round,
                        check_sent: false,
                        acked: [false; 2],
                    }
                } else {
                    Phase::Survey {
                        open: false,
                        done: [false; 2],
                    }
                };
            }
            (Payload::AttentionCheck { .. }, Phase::Between { check_sent, .. }) => *check_sent = true,
            (Payload::AttentionAck { .. }, Phase::Between { acked, .. }) => {
                if let Some(r) = event.actor.role() {
                    acked[idx(r)] = true;
                }
            }
            (Payload::SurveyOpen, Phase::Survey { open, .. }) => *open = true,
            (Payload::SurveyResponse(_), Phase::Survey { done, .. }) => {
                if let Some(r) = event.actor.role() {
                    done[idx(r)] = true;
                }
                let done = *done;
                if [Role::Director, Role::Matcher].iter().all(|r| !human(*r) || done[idx(*r)]) {
                    self.phase = Phase::Finished;
                }
            }
            (Payload::Abort { round: None, .. }, _) => self.phase = Phase::Expired,
            _ => {}
        }
    }
}

/// An agent turn handed out to run off the session lock.
pub struct AgentJob {
    pub role: Role,
    pub agent: Box<dyn Agent>,
    pub state: SessionState,
    pub round: RoundState,
    pub history: Vec<ChatLine>,
    mark: usize,
}

impl AgentJob {
    /// Runs the agent; blocking (LLM agents call the provider synchronously).
    pub fn run(mut self) -> (Self, Result<Action, AgentError>) {
        let obs = refgame_core::participants::Observation {
            session: &self.state,
            round: &self.round,
            history: &self.history,
        };
        let result = self.agent.act(&obs);
        (self, result)
    }
}

pub struct Session {
    pub id: String,
    pub record: SessionRecord,
    state: SessionState,
    log: EventLog,
    life: Lifecycle,
    store: SessionStore,
    agents: [Option<Box<dyn Agent>>; 2],
    provider: Option<Arc<dyn CompletionProvider>>,
    connected: [bool; 2],
    /// An agent driver task is running for this session.
    pub driving: bool,
    tx: broadcast::Sender<TranscriptEvent>,
}

impl Session {
    pub fn new(
        record: SessionRecord,
        store: SessionStore,
        events: Vec<TranscriptEvent>,
        provider: Option<Arc<dyn CompletionProvider>>,
    ) -> Result<Self, ServerError> {
        let config = record.config.clone();
        let mut state = SessionState::new(config.clone()).map_err(|e| ServerError::Corrupt(e.to_string()))?;
        let mut log = EventLog::new(record.session_id.clone());
        let mut life = Lifecycle::new();
        for e in events {
            apply_to_game(&mut state, &e).map_err(|err| ServerError::Corrupt(format!("seq {}: {err}", e.seq)))?;
            life.observe(&e, &config);
            log.push_existing(e)?;
        }
        let mut agents: [Option<Box<dyn Agent>>; 2] = [None, None];
        for role in [Role::Director, Role::Matcher] {
            let spec = config.participant(role);
            if spec.is_agent() {
                agents[idx(role)] = Some(
                    build_agent(spec, provider.clone(), DEFAULT_MAX_ATTEMPTS)
                        .map_err(|e| ServerError::Invalid(format!("{role}: {e}")))?,
                );
            }
        }
        Ok(Session {
            id: record.session_id.clone(),
            record,
            state,
            log,
            life,
            store,
            agents,
            provider,
            connected: [false; 2],
            driving: false,
            tx: broadcast::channel(BROADCAST_CAPACITY).0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.record.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        self.log.events()
    }

    pub fn events_after(&self, seq: u64) -> Vec<TranscriptEvent> {
        self.log.events().iter().filter(|e| e.seq > seq).cloned().collect()
    }

    pub fn last_seq(&self) -> u64 {
        self.log.last_seq()
    }

    pub fn phase(&self) -> Phase {
        self.life.phase
    }

    pub fn lifecycle(&self) -> &Lifecycle {
        &self.life
    }

    pub fn subscribe(&self) -> broadcast::Receiver<TranscriptEvent> {
        self.tx.subscribe()
    }

    pub fn store_path(&self) -> std::path::PathBuf {
        self.store.events_path()
    }

    fn is_human(&self, role: Role) -> bool {
        self.config().participant(role).kind == ParticipantKind::Human
    }

    pub fn role_for_token(&self, token: &str) -> Option<Role> {
        let t = &self.record.tokens;
        if t.director.as_deref() == Some(token) {
            Some(Role::Director)
        } else if t.matcher.as_deref() == Some(token) {
            Some(Role::Matcher)
        } else {
            None
        }
    }

    /// Persists, folds and broadcasts every event appended since `mark`.
    fn flush_from(&mut self, mark: usize) -> Result<(), ServerError> {
        let fresh: Vec<TranscriptEvent> = self.log.events()[mark..].to_vec();
        for e in fresh {
            self.store.append(&e)?;
            self.life.observe(&e, &self.record.config);
            let _ = self.tx.send(e);
        }
        Ok(())
    }

    fn commit(&mut self, clock: &dyn Clock, actor: Actor, payload: Payload) -> Result<u64, ServerError> {
        let mark = self.log.len();
        let seq = record(&mut self.state, &mut self.log, clock, actor, payload)?.seq;
        self.flush_from(mark)?;
        Ok(seq)
    }

    fn ensure_live(&self) -> Result<(), ServerError> {
        match self.life.phase {
            Phase::Expired => Err(ServerError::Stale("expired".into())),
            Phase::Finished => Err(ServerError::Stale("finished".into())),
            _ => Ok(()),
        }
    }

    pub fn join(&mut self, role: Role, clock: &dyn Clock) -> Result<(), ServerError> {
        if self.life.phase == Phase::Expired {
            return Err(ServerError::Stale("expired".into()));
        }
        if self.connected[idx(role)] {
            return Err(ServerError::DuplicateJoin(role.to_string()));
        }
        self.connected[idx(role)] = true;
        if !self.life.joined[idx(role)] {
            if let Err(e) = self.commit(clock, Actor::System, Payload::Joined { role }) {
                self.connected[idx(role)] = false;
                return Err(e);
            }
        }
        self.advance(clock)
    }

    pub fn leave(&mut self, role: Role) {
        self.connected[idx(role)] = false;
    }

    pub fn is_connected(&self, role: Role) -> bool {
        self.connected[idx(role)]
    }

    /// Validates and records a participant's event; returns its sequence number.
    pub fn ingest(&mut self, role: Role, payload: Payload, clock: &dyn Clock) -> Result<u64, ServerError> {
        self.ensure_live()?;
        if payload.is_system_only() {
            return Err(ServerError::Unauthorized(format!("{} is emitted by the server only", payload.kind())));
        }
        if payload.is_matcher_only() && role != Role::Matcher {
            return Err(ServerError::Unauthorized(format!("only the matcher may send {}", payload.kind())));
        }
        if !self.is_human(role) {
            return Err(ServerError::Unauthorized(format!("the {role} is played by an agent")));
        }
        let actor = Actor::from(role);
        let seq = match &payload {
            Payload::Submit => {
                self.require_playing()?;
                let mark = self.log.len();
                let result = submit_round(&mut self.state, &mut self.log, clock, actor);
                self.flush_from(mark)?;
                result?;
                self.log.events()[mark].seq
            }
            Payload::ChatMessage { .. }
            | Payload::TypingStart
            | Payload::TypingStop
            | Payload::Placement { .. }
            | Payload::Clear { .. } => {
                self.require_playing()?;
                self.commit(clock, actor, payload)?
            }
            Payload::AttentionAck { round } => match self.life.phase {
                Phase::Between {
                    round: k,
                    check_sent: true,
                    acked,
                } if k == *round && !acked[idx(role)] => self.commit(clock, actor, payload)?,
                _ => return Err(ServerError::WrongPhase(format!("no attention check pending for round {round}"))),
            },
            Payload::SurveyResponse(response) => {
                response.validate().map_err(ServerError::Invalid)?;
                match self.life.phase {
                    Phase::Survey { open: true, done } if !done[idx(role)] => self.commit(clock, actor, payload)?,
                    Phase::Survey { open: true, .. } => {
                        return Err(ServerError::WrongPhase("survey already submitted".into()))
                    }
                    _ => return Err(ServerError::WrongPhase("survey is not open".into())),
                }
            }
            other => return Err(ServerError::Unauthorized(format!("{} cannot be sent by participants", other.kind()))),
        };
        self.advance(clock)?;
        Ok(seq)
    }

    fn require_playing(&self) -> Result<u32, ServerError> {
        match self.life.phase {
            Phase::Playing { round }
                if self.state.round(round).is_some_and(|r| !r.is_finished()) =>
            {
                Ok(round)
            }
            other => Err(ServerError::WrongPhase(format!("no round in progress ({other:?})"))),
        }
    }

    /// The system event the lifecycle is waiting on, if nothing but the service is needed.
    fn due_system_event(&self) -> Option<(Actor, Payload)> {
        match self.life.phase {
            Phase::Waiting => [Role::Director, Role::Matcher]
                .iter()
                .all(|r| !self.is_human(*r) || self.life.joined[idx(*r)])
                .then_some((Actor::System, Payload::RoundStart { round: 1 })),
            Phase::Between {
                round,
                check_sent: false,
                ..
            } => Some((
                Actor::System,
                Payload::AttentionCheck {
                    round,
                    prompt: ATTENTION_PROMPT.into(),
                },
            )),
            Phase::Between { round, acked, .. } => {
                if let Some(agent) = [Role::Director, Role::Matcher]
                    .into_iter()
                    .find(|r| !self.is_human(*r) && !acked[idx(*r)])
                {
                    return Some((Actor::from(agent), Payload::AttentionAck { round }));
                }
                acked
                    .iter()
                    .all(|a| *a)
                    .then_some((Actor::System, Payload::RoundStart { round: round + 1 }))
            }
            Phase::Survey { open: false, .. } => Some((Actor::System, Payload::SurveyOpen)),
            _ => None,
        }
    }

    /// Emits every system event that is due: round starts, the turn cap,
    /// attention checks, agent acknowledgements and the survey.
    pub fn advance(&mut self, clock: &dyn Clock) -> Result<(), ServerError> {
        loop {
            let mark = self.log.len();
            let cap = self.config().turn_cap as usize;
            match self.life.phase {
                Phase::Playing { round }
                    if self.life.chat_in_round >= cap
                        && self.state.round(round).is_some_and(|r| !r.is_finished()) =>
                {
                    let result = if self.state.round(round).is_some_and(RoundState::can_submit) {
                        submit_round(&mut self.state, &mut self.log, clock, Actor::System).map(|_| ())
                    } else {
                        abort_round(
                            &mut self.state,
                            &mut self.log,
                            clock,
                            round,
                            &format!("turn cap of {cap} messages reached"),
                        )
                    };
                    self.flush_from(mark)?;
                    result?;
                }
                _ => match self.due_system_event() {
                    Some((actor, payload)) => {
                        self.commit(clock, actor, payload)?;
                    }
                    None => return Ok(()),
                },
            }
        }
    }

    /// Records an expiry abort when the session is still unpaired after `expiry_ms`.
    pub fn expire_if_stale(&mut self, now_ms: u64, expiry_ms: u64, clock: &dyn Clock) -> Result<bool, ServerError> {
        if self.life.phase != Phase::Waiting || now_ms < self.record.created_ms + expiry_ms {
            return Ok(false);
        }
        self.commit(
            clock,
            Actor::System,
            Payload::Abort {
                reason: EXPIRY_REASON.into(),
                round: None,
            },
        )?;
        Ok(true)
    }

    /// The agent whose turn it is, if any.
    pub fn pending_agent(&self) -> Option<Role> {
        let Phase::Playing { round } = self.life.phase else {
            return None;
        };
        if self.state.round(round).is_none_or(|r| r.is_finished())
            || self.life.chat_in_round >= self.config().turn_cap as usize
        {
            return None;
        }
        let role = match self.life.last_speaker {
            None => Role::Director,
            Some(r) => r.partner(),
        };
        (!self.is_human(role) && self.agents[idx(role)].is_some()).then_some(role)
    }

    /// Hands out the next agent turn and shows the partner the typing indicator.
    pub fn take_agent_job(&mut self, clock: &dyn Clock) -> Result<Option<AgentJob>, ServerError> {
        let Some(role) = self.pending_agent() else {
            return Ok(None);
        };
        let Phase::Playing { round } = self.life.phase else {
            return Ok(None);
        };
        self.commit(clock, Actor::from(role), Payload::TypingStart)?;
        let agent = self.agents[idx(role)].take().expect("pending agent is present");
        Ok(Some(AgentJob {
            role,
            agent,
            state: self.state.clone(),
            round: self.state.round(round).expect("round started").clone(),
            history: round_history(&self.log, round),
            mark: self.log.len(),
        }))
    }

    /// Applies a finished agent turn. The action is dropped when the chat moved on
    /// while the agent was thinking; the next job then sees the newer history.
    pub fn finish_agent_job(
        &mut self,
        job: AgentJob,
        result: Result<Action, AgentError>,
        clock: &dyn Clock,
    ) -> Result<(), ServerError> {
        let AgentJob {
            role,
            agent,
            round,
            mark,
            ..
        } = job;
        self.agents[idx(role)] = Some(agent);
        let superseded = self.log.events()[mark..].iter().any(|e| {
            matches!(
                e.payload,
                Payload::ChatMessage { .. }
                    | Payload::RoundStart { .. }
                    | Payload::RoundFeedback { .. }
                    | Payload::Abort { .. }
            )
        });
        self.commit(clock, Actor::from(role), Payload::TypingStop)?;
        if superseded {
            return Ok(());
        }
        let mark = self.log.len();
        let outcome = match result {
            Ok(action) => apply_action(&mut self.state, &mut self.log, clock, role, action).map(|_| ()),
            Err(err) => {
                tracing::warn!(session = %self.id, %role, error = %err, "agent failed; aborting round");
                abort_round(
                    &mut self.state,
                    &mut self.log,
                    clock,
                    round.round_index,
                    &format!("{role} agent failed: {err}"),
                )
            }
        };
        self.flush_from(mark)?;
        if let Err(e) = outcome {
            tracing::warn!(session = %self.id, %role, error = %e, "agent action rejected");
        }
        self.advance(clock)
    }

    /// Recovers from an agent that panicked in its worker thread: the agent is
    /// rebuilt from its spec and the round is aborted.
    pub fn agent_panicked(&mut self, role: Role, round_index: u32, clock: &dyn Clock) -> Result<(), ServerError> {
        if let Ok(agent) = build_agent(self.config().participant(role), self.provider.clone(), DEFAULT_MAX_ATTEMPTS) {
            self.agents[idx(role)] = Some(agent);
        }
        self.commit(clock, Actor::from(role), Payload::TypingStop)?;
        if self.state.round(round_index).is_some_and(|r| !r.is_finished()) {
            let mark = self.log.len();
            let res = abort_round(&mut self.state, &mut self.log, clock, round_index, &format!("{role} agent crashed"));
            self.flush_from(mark)?;
            res?;
        }
        self.advance(clock)
    }
}
