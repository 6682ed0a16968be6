//! Offline simulation of agent-only sessions.

use std::sync::Arc;

use crate::game::{GameError, SessionConfig, SessionState};
use crate::participants::{build_agent, run_ai_round, AgentError, CompletionProvider, RoundLimits, RoundOutcome};
use crate::transcript::{record, Actor, Clock, EventError, EventLog, Payload};

/// Virtual pause between rounds (feedback screen).
pub const INTER_ROUND_PAUSE_MS: u64 = 5_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Clone, Debug)]
pub struct SimulatedSession {
    pub session_id: String,
    pub state: SessionState,
    pub log: EventLog,
    pub outcomes: Vec<RoundOutcome>,
}

impl SimulatedSession {
    pub fn n_aborted(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, RoundOutcome::Aborted { .. }))
            .count()
    }
}

/// Plays every round of an agent-only session. Rounds that abort are recorded and
/// the session moves on to the next round.
pub fn simulate_session(
    session_id: &str,
    config: SessionConfig,
    provider: Option<Arc<dyn CompletionProvider>>,
    limits: RoundLimits,
    clock: &dyn Clock,
) -> Result<SimulatedSession, SimError> {
    let mut state = SessionState::new(config)?;
    let config = state.config().clone();
    let mut director = build_agent(&config.director, provider.clone(), limits.max_attempts)?;
    let mut matcher = build_agent(&config.matcher, provider, limits.max_attempts)?;
    let mut log = EventLog::new(session_id);
    let mut outcomes = Vec::new();
    for k in 1..=config.n_rounds {
        if k > 1 {
            clock.advance(INTER_ROUND_PAUSE_MS);
        }
        record(&mut state, &mut log, clock, Actor::System, Payload::RoundStart { round: k })?;
        let outcome = run_ai_round(&mut state, &mut log, director.as_mut(), matcher.as_mut(), clock, limits)?;
        outcomes.push(outcome);
    }
    Ok(SimulatedSession {
        session_id: session_id.to_string(),
        state,
        log,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BasketCatalog, Condition};
    use crate::participants::{ParticipantSpec, Role, ScriptedBehavior};
    use crate::transcript::{replay_game, MockClock};

    #[test]
    fn four_perfect_rounds_replay_identically() {
        let cfg = SessionConfig::new(
            Condition::AA,
            11,
            BasketCatalog::builtin(),
            ParticipantSpec::scripted(Role::Director, ScriptedBehavior::Perfect),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect),
        );
        let clock = MockClock::new(MockClock::EPOCH_MS);
        let sim = simulate_session("s", cfg.clone(), None, RoundLimits::default(), &clock).unwrap();
        assert_eq!(sim.outcomes.len(), 4);
        assert!(sim.state.is_complete());
        assert_eq!(replay_game(cfg, sim.log.events()).unwrap(), sim.state);
        for r in sim.state.rounds() {
            assert_eq!(r.result.as_ref().unwrap().accuracy_pct, 100.0);
        }
    }

    #[test]
    fn human_roles_cannot_be_simulated() {
        let cfg = SessionConfig::new(
            Condition::HA,
            1,
            BasketCatalog::builtin(),
            ParticipantSpec::human(Role::Director),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect),
        );
        let clock = MockClock::new(0);
        assert!(matches!(
            simulate_session("s", cfg, None, RoundLimits::default(), &clock),
            Err(SimError::Agent(AgentError::HumanParticipant))
        ));
    }
}
