//! Agent participants and the loop that plays a round between two of them.

use std::collections::HashMap;
use std::sync::Arc;

use super::policy::{director_move, matcher_move, DirectorView, FeatureSet, MatcherView};
use super::prompt::{build_director_prompt, build_matcher_prompt, ChatLine};
use super::provider::{CompletionProvider, MessageRole, ProviderError, ProviderMessage};
use super::reply::{check_director_order, parse_director_reply_with, parse_matcher_reply_with, ReplyError};
use super::spec::{ParticipantKind, ParticipantSpec, Role, ScriptedBehavior};
use crate::game::{RoundResult, RoundState, SessionConfig, SessionState};
use crate::transcript::{record, Actor, Clock, EventError, EventLog, Payload};

pub const DEFAULT_MAX_ATTEMPTS: usize = 3;

/// Everything an agent may look at when taking its turn.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub session: &'a SessionState,
    pub round: &'a RoundState,
    pub history: &'a [ChatLine],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Say(String),
    SayAndPlace { text: String, tile: usize, position: usize },
    SayAndSubmit { text: String, placement: Option<(usize, usize)> },
}

impl Action {
    pub fn text(&self) -> &str {
        match self {
            Action::Say(t) | Action::SayAndPlace { text: t, .. } | Action::SayAndSubmit { text: t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("no valid reply after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: usize, last_error: String },
    #[error("provider timed out")]
    ProviderTimeout,
    #[error("provider error: {0}")]
    Provider(String),
    #[error("human participants are not driven by an agent")]
    HumanParticipant,
}

pub trait Agent: Send {
    fn role(&self) -> Role;
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentError>;
}

/// Oracle agent that plays from the catalog's feature tags.
#[derive(Clone, Debug)]
pub struct ScriptedAgent {
    role: Role,
    behavior: ScriptedBehavior,
}

impl ScriptedAgent {
    pub fn new(role: Role, behavior: ScriptedBehavior) -> Self {
        ScriptedAgent { role, behavior }
    }
}

fn features_of<'a>(config: &'a SessionConfig, ids: &[crate::game::BasketId]) -> Vec<&'a FeatureSet> {
    static EMPTY: FeatureSet = FeatureSet::new();
    ids.iter()
        .map(|id| config.catalog.get(id).map_or(&EMPTY, |e| &e.features))
        .collect()
}

impl Agent for ScriptedAgent {
    fn role(&self) -> Role {
        self.role
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentError> {
        let config = obs.session.config();
        match self.role {
            Role::Director => {
                let view = DirectorView {
                    round_index: obs.round.round_index,
                    grid: features_of(config, &obs.round.director_order),
                    behavior: self.behavior,
                    seed: config.seed,
                };
                Ok(Action::Say(director_move(&view, obs.history).utterance))
            }
            Role::Matcher => {
                let view = MatcherView {
                    round_index: obs.round.round_index,
                    pool: features_of(config, &obs.round.pool_order),
                    slots: &obs.round.slots,
                    behavior: self.behavior,
                    seed: config.seed,
                };
                let mv = matcher_move(&view, obs.history);
                Ok(match (mv.submit, mv.placement) {
                    (true, placement) => Action::SayAndSubmit { text: mv.utterance, placement },
                    (false, Some((tile, position))) => Action::SayAndPlace { text: mv.utterance, tile, position },
                    (false, None) => Action::Say(mv.utterance),
                })
            }
        }
    }
}

/// Agent backed by a completion provider, with strict reply validation and retries.
pub struct LlmAgent {
    spec: ParticipantSpec,
    provider: Arc<dyn CompletionProvider>,
    max_attempts: usize,
    /// Highest basket position the director has described, per round.
    described: HashMap<u32, usize>,
}

impl LlmAgent {
    pub fn new(spec: ParticipantSpec, provider: Arc<dyn CompletionProvider>, max_attempts: usize) -> Self {
        LlmAgent {
            spec,
            provider,
            max_attempts: max_attempts.max(1),
            described: HashMap::new(),
        }
    }

    fn correction(err: &ReplyError) -> String {
        format!(
            "Your previous reply was rejected: {err}. Reply again with a single JSON object that follows the required schema exactly."
        )
    }
}

impl Agent for LlmAgent {
    fn role(&self) -> Role {
        self.spec.role
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentError> {
        let role = self.spec.role;
        let variant = obs.session.config().prompt_variant;
        let k = obs.round.round_index;
        let bundle = match role {
            Role::Director => build_director_prompt(obs.session, obs.round, obs.history),
            Role::Matcher => build_matcher_prompt(obs.session, obs.round, obs.history),
        };
        let mut request = bundle.to_request(&self.spec, role);
        let mut last_error = String::new();
        for _ in 0..self.max_attempts {
            let raw = match self.provider.complete(&request) {
                Ok(raw) => raw,
                Err(ProviderError::Timeout) => return Err(AgentError::ProviderTimeout),
                Err(ProviderError::Transport(e)) => {
                    last_error = e;
                    continue;
                }
            };
            let parsed = match role {
                Role::Director => {
                    let next = (self.described.get(&k).copied().unwrap_or(0) + 1).min(obs.round.n_positions());
                    parse_director_reply_with(&raw, variant).and_then(|r| {
                        check_director_order(&r, next)?;
                        Ok(r)
                    })
                    .map(|r| {
                        if let Some(reasoning) = &r.reasoning {
                            let d = self.described.entry(k).or_default();
                            *d = (*d).max(reasoning.target_position);
                        }
                        Action::Say(r.utterance)
                    })
                }
                Role::Matcher => parse_matcher_reply_with(&raw, obs.round, variant).map(|r| {
                    let placement = r.placement(obs.round);
                    match (r.selection.ready_to_submit, placement) {
                        (true, placement) => Action::SayAndSubmit { text: r.utterance, placement },
                        (false, Some((tile, position))) => Action::SayAndPlace { text: r.utterance, tile, position },
                        (false, None) => Action::Say(r.utterance),
                    }
                }),
            };
            match parsed {
                Ok(action) => return Ok(action),
                Err(err) => {
                    last_error = err.to_string();
                    request.messages.push(ProviderMessage::new(MessageRole::Assistant, raw));
                    request.messages.push(ProviderMessage::new(MessageRole::User, Self::correction(&err)));
                }
            }
        }
        Err(AgentError::RetriesExhausted {
            attempts: self.max_attempts,
            last_error,
        })
    }
}

/// Builds the agent for a participant. LLM participants need a provider.
pub fn build_agent(
    spec: &ParticipantSpec,
    provider: Option<Arc<dyn CompletionProvider>>,
    max_attempts: usize,
) -> Result<Box<dyn Agent>, AgentError> {
    match spec.kind {
        ParticipantKind::Human => Err(AgentError::HumanParticipant),
        ParticipantKind::Scripted => Ok(Box::new(ScriptedAgent::new(spec.role, spec.behavior()))),
        ParticipantKind::Llm => {
            let provider = provider.ok_or_else(|| AgentError::Provider("no completion provider configured".into()))?;
            Ok(Box::new(LlmAgent::new(spec.clone(), provider, max_attempts)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundLimits {
    /// Maximum chat messages per round before it is aborted.
    pub turn_cap: usize,
    /// Provider calls per agent turn, including the first.
    pub max_attempts: usize,
}

impl Default for RoundLimits {
    fn default() -> Self {
        RoundLimits {
            turn_cap: crate::game::DEFAULT_TURN_CAP as usize,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl RoundLimits {
    pub fn from_config(config: &SessionConfig) -> Self {
        RoundLimits {
            turn_cap: config.turn_cap as usize,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoundOutcome {
    Completed { result: RoundResult, turns: usize },
    Aborted { reason: String, turns: usize },
}

/// Chat lines of one round, in order.
pub fn round_history(log: &EventLog, round_index: u32) -> Vec<ChatLine> {
    let mut current = None;
    let mut lines = Vec::new();
    for e in log.events() {
        match &e.payload {
            Payload::RoundStart { round } => current = Some(*round),
            Payload::ChatMessage { text } if current == Some(round_index) => {
                if let Some(speaker) = e.actor.role() {
                    lines.push(ChatLine { speaker, text: text.clone() });
                }
            }
            _ => {}
        }
    }
    lines
}

/// Simulated think-and-type time for a message of `text`.
pub fn think_time_ms(text: &str) -> u64 {
    1_500 + 60 * text.split_whitespace().count() as u64
}

/// Records an agent or human action: the chat line, then any placement or submission,
/// then the round feedback. Returns the result when the round was scored.
pub fn apply_action(
    state: &mut SessionState,
    log: &mut EventLog,
    clock: &dyn Clock,
    role: Role,
    action: Action,
) -> Result<Option<RoundResult>, EventError> {
    let actor = Actor::from(role);
    let (text, placement, submit) = match action {
        Action::Say(text) => (text, None, false),
        Action::SayAndPlace { text, tile, position } => (text, Some((tile, position)), false),
        Action::SayAndSubmit { text, placement } => (text, placement, true),
    };
    record(state, log, clock, actor, Payload::ChatMessage { text })?;
    if let Some((tile, position)) = placement {
        record(state, log, clock, actor, Payload::Placement { tile, position })?;
    }
    if !submit {
        return Ok(None);
    }
    submit_round(state, log, clock, actor).map(Some)
}

/// Scores the current round and announces the result.
pub fn submit_round(
    state: &mut SessionState,
    log: &mut EventLog,
    clock: &dyn Clock,
    actor: Actor,
) -> Result<RoundResult, EventError> {
    record(state, log, clock, actor, Payload::Submit)?;
    let round = state.current_round().expect("submitted round exists");
    let result = round.result.clone().expect("submitted round is scored");
    let round_index = round.round_index;
    record(
        state,
        log,
        clock,
        Actor::System,
        Payload::RoundFeedback {
            round: round_index,
            result: result.clone(),
        },
    )?;
    Ok(result)
}

/// Plays the current round between two agents, director first, alternating turns.
/// Agent failures and the turn cap end the round with an `Abort` event.
pub fn run_ai_round(
    state: &mut SessionState,
    log: &mut EventLog,
    director: &mut dyn Agent,
    matcher: &mut dyn Agent,
    clock: &dyn Clock,
    limits: RoundLimits,
) -> Result<RoundOutcome, EventError> {
    let round_index = state
        .current_round()
        .filter(|r| !r.is_finished())
        .map(|r| r.round_index)
        .ok_or(crate::game::GameError::RoundNotStarted(state.pending_rounds() as u32))?;
    let mut history = round_history(log, round_index);
    let mut turns = history.len();
    loop {
        if turns >= limits.turn_cap {
            if state.round(round_index).is_some_and(RoundState::can_submit) {
                let result = submit_round(state, log, clock, Actor::System)?;
                return Ok(RoundOutcome::Completed { result, turns });
            }
            let reason = format!("turn cap of {} messages reached", limits.turn_cap);
            abort_round(state, log, clock, round_index, &reason)?;
            return Ok(RoundOutcome::Aborted { reason, turns });
        }
        let role = if turns % 2 == 0 { Role::Director } else { Role::Matcher };
        let agent: &mut dyn Agent = match role {
            Role::Director => &mut *director,
            Role::Matcher => &mut *matcher,
        };
        let round = state.round(round_index).expect("round started").clone();
        let action = agent.act(&Observation {
            session: state,
            round: &round,
            history: &history,
        });
        let action = match action {
            Ok(a) => a,
            Err(e) => {
                let reason = format!("{role} agent failed: {e}");
                abort_round(state, log, clock, round_index, &reason)?;
                return Ok(RoundOutcome::Aborted { reason, turns });
            }
        };
        clock.advance(think_time_ms(action.text()));
        history.push(ChatLine {
            speaker: role,
            text: action.text().to_string(),
        });
        turns += 1;
        if let Some(result) = apply_action(state, log, clock, role, action)? {
            return Ok(RoundOutcome::Completed { result, turns });
        }
    }
}

pub fn abort_round(
    state: &mut SessionState,
    log: &mut EventLog,
    clock: &dyn Clock,
    round_index: u32,
    reason: &str,
) -> Result<(), EventError> {
    record(
        state,
        log,
        clock,
        Actor::System,
        Payload::Abort {
            reason: reason.to_string(),
            round: Some(round_index),
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BasketCatalog, Condition};
    use crate::participants::provider::{MockLlmProvider, ReplayProvider};
    use crate::participants::ReasoningEffort;
    use crate::transcript::MockClock;

    fn config(director: ParticipantSpec, matcher: ParticipantSpec) -> SessionConfig {
        SessionConfig::new(Condition::AA, 7, BasketCatalog::builtin(), director, matcher)
    }

    fn start(cfg: SessionConfig, clock: &MockClock) -> (SessionState, EventLog) {
        let mut state = SessionState::new(cfg).unwrap();
        let mut log = EventLog::new("t");
        record(&mut state, &mut log, clock, Actor::System, Payload::RoundStart { round: 1 }).unwrap();
        (state, log)
    }

    #[test]
    fn scripted_pair_is_perfect_in_26_turns() {
        let cfg = config(
            ParticipantSpec::scripted(Role::Director, ScriptedBehavior::Perfect),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect),
        );
        let clock = MockClock::new(MockClock::EPOCH_MS);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = ScriptedAgent::new(Role::Director, ScriptedBehavior::Perfect);
        let mut m = ScriptedAgent::new(Role::Matcher, ScriptedBehavior::Perfect);
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, RoundLimits::default()).unwrap();
        match out {
            RoundOutcome::Completed { result, turns } => {
                assert_eq!(result.accuracy_pct, 100.0);
                assert_eq!(turns, 26);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(log.events().last().unwrap().payload, Payload::RoundFeedback { round: 1, .. }));
        assert!(clock.now_ms() > MockClock::EPOCH_MS);
    }

    #[test]
    fn mock_llm_pair_matches_scripted_pair() {
        let d_spec = ParticipantSpec::llm(Role::Director, "mock-d", ReasoningEffort::Low);
        let m_spec = ParticipantSpec::llm(Role::Matcher, "mock-m", ReasoningEffort::Low);
        let cfg = config(d_spec.clone(), m_spec.clone());
        let provider: Arc<dyn CompletionProvider> = Arc::new(MockLlmProvider::for_session(&cfg));
        let clock = MockClock::new(0);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = LlmAgent::new(d_spec, provider.clone(), 3);
        let mut m = LlmAgent::new(m_spec, provider, 3);
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, RoundLimits::default()).unwrap();
        assert!(matches!(out, RoundOutcome::Completed { ref result, turns: 26 } if result.accuracy_pct == 100.0), "{out:?}");
    }

    #[test]
    fn malformed_replies_exhaust_retries_and_abort() {
        let d_spec = ParticipantSpec::llm(Role::Director, "x", ReasoningEffort::None);
        let cfg = config(d_spec.clone(), ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect));
        let replay = Arc::new(ReplayProvider::new(["not json", "{\"utterance\": 3}", "still bad"]));
        let clock = MockClock::new(0);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = LlmAgent::new(d_spec, replay.clone(), 3);
        let mut m = ScriptedAgent::new(Role::Matcher, ScriptedBehavior::Perfect);
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, RoundLimits::default()).unwrap();
        assert!(matches!(out, RoundOutcome::Aborted { turns: 0, .. }));
        assert!(state.round(1).unwrap().aborted.is_some());
        let reqs = replay.requests();
        assert_eq!(reqs.len(), 3);
        // each retry carries the rejected reply and a correction
        assert_eq!(reqs[2].messages.len(), reqs[0].messages.len() + 4);
        assert!(matches!(log.events().last().unwrap().payload, Payload::Abort { round: Some(1), .. }));
    }

    #[test]
    fn turn_cap_aborts() {
        let cfg = config(
            ParticipantSpec::scripted(Role::Director, ScriptedBehavior::Perfect),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect),
        );
        let clock = MockClock::new(0);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = ScriptedAgent::new(Role::Director, ScriptedBehavior::Perfect);
        let mut m = ScriptedAgent::new(Role::Matcher, ScriptedBehavior::Perfect);
        let limits = RoundLimits { turn_cap: 4, max_attempts: 3 };
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, limits).unwrap();
        assert!(matches!(out, RoundOutcome::Aborted { turns: 4, .. }));
        assert!(state.round(1).unwrap().aborted.is_some());
    }

    #[test]
    fn always_wrong_matcher_scores_zero() {
        let cfg = config(
            ParticipantSpec::scripted(Role::Director, ScriptedBehavior::Perfect),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Noisy(1.0)),
        );
        let clock = MockClock::new(0);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = ScriptedAgent::new(Role::Director, ScriptedBehavior::Perfect);
        let mut m = ScriptedAgent::new(Role::Matcher, ScriptedBehavior::Noisy(1.0));
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, RoundLimits::default()).unwrap();
        assert!(matches!(out, RoundOutcome::Completed { ref result, .. } if result.accuracy_pct == 0.0), "{out:?}");
    }

    #[test]
    fn turn_cap_scores_a_complete_sequence() {
        let cfg = config(
            ParticipantSpec::scripted(Role::Director, ScriptedBehavior::Perfect),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect),
        );
        let clock = MockClock::new(0);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = ScriptedAgent::new(Role::Director, ScriptedBehavior::Perfect);
        let mut m = ScriptedAgent::new(Role::Matcher, ScriptedBehavior::Perfect);
        let limits = RoundLimits { turn_cap: 24, max_attempts: 3 };
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, limits).unwrap();
        assert!(matches!(out, RoundOutcome::Completed { ref result, turns: 24 } if result.accuracy_pct == 100.0), "{out:?}");
    }

    #[test]
    fn timeout_aborts_without_retry() {
        let d_spec = ParticipantSpec::llm(Role::Director, "x", ReasoningEffort::None);
        let cfg = config(d_spec.clone(), ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect));
        let replay = Arc::new(ReplayProvider::with_results([Err(ProviderError::Timeout)]));
        let clock = MockClock::new(0);
        let (mut state, mut log) = start(cfg, &clock);
        let mut d = LlmAgent::new(d_spec, replay.clone(), 3);
        let mut m = ScriptedAgent::new(Role::Matcher, ScriptedBehavior::Perfect);
        let out = run_ai_round(&mut state, &mut log, &mut d, &mut m, &clock, RoundLimits::default()).unwrap();
        assert!(matches!(out, RoundOutcome::Aborted { ref reason, .. } if reason.contains("timed out")));
        assert_eq!(replay.requests().len(), 1);
    }

    #[test]
    fn human_spec_has_no_agent() {
        assert!(matches!(
            build_agent(&ParticipantSpec::human(Role::Director), None, 3),
            Err(AgentError::HumanParticipant)
        ));
    }
}
