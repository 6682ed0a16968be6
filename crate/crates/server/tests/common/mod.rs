#![allow(dead_code)]

use std::sync::Arc;

use refgame_core::participants::{Agent, Observation, Role, ScriptedAgent, ScriptedBehavior};
use refgame_core::transcript::{Clock, EventLog, MockClock, SurveyResponse};
use refgame_server::{ProviderFactory, Registry, ServerConfig};

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub clock: Arc<MockClock>,
    pub registry: Arc<Registry>,
}

pub fn no_providers() -> ProviderFactory {
    Arc::new(|_| None)
}

pub async fn open(dir: &std::path::Path, clock: &Arc<MockClock>) -> Arc<Registry> {
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    Registry::open(ServerConfig::new(dir), dyn_clock, no_providers()).await.unwrap()
}

pub async fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(MockClock::new(MockClock::EPOCH_MS));
    let registry = open(dir.path(), &clock).await;
    Harness { dir, clock, registry }
}

/// What a perfect scripted participant would say or do next in the given role.
pub async fn scripted_action(
    registry: &Registry,
    id: &str,
    role: Role,
) -> refgame_core::participants::Action {
    let events = registry.replay(id).await.unwrap();
    let state = registry.state(id).await.unwrap();
    let mut log = EventLog::new(id);
    for e in events {
        log.push_existing(e).unwrap();
    }
    let round = state.current_round().unwrap().clone();
    let history = refgame_core::participants::round_history(&log, round.round_index);
    ScriptedAgent::new(role, ScriptedBehavior::Perfect)
        .act(&Observation {
            session: &state,
            round: &round,
            history: &history,
        })
        .unwrap()
}

pub fn survey(likeness: u8) -> SurveyResponse {
    SurveyResponse {
        partner_capability: 4,
        partner_helpfulness: 5,
        partner_understanding: 4,
        partner_adaptability: 3,
        collaboration_improvement: 4,
        perceived_human_likeness: likeness,
        ai_familiarity: 2,
        ai_usage_frequency: 3,
        free_text: String::new(),
    }
}
