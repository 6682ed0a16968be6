//! Basket-matching game: catalog, per-round placement state, scoring and the
//! seeded session that ties rounds together.

mod catalog;
mod round;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use catalog::{BasketCatalog, BasketEntry, BasketId, DEFAULT_DISTRACTORS, N_TARGETS};
pub use round::{RoundResult, RoundState};

use crate::participants::{ParticipantKind, ParticipantSpec, Role};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("duplicate basket id {0}")]
    DuplicateId(String),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("round {round} out of range 1..={n_rounds}")]
    RoundOutOfRange { round: u32, n_rounds: u32 },
    #[error("round {0} is not finished")]
    PreviousRoundUnfinished(u32),
    #[error("round {0} has not started")]
    RoundNotStarted(u32),
    #[error("round {0} already started")]
    RoundAlreadyStarted(u32),
    #[error("candidate tile {tile} out of range 1..={max}")]
    TileOutOfRange { tile: usize, max: usize },
    #[error("position {position} out of range 1..={max}")]
    PositionOutOfRange { position: usize, max: usize },
    #[error("round already submitted")]
    RoundSubmitted,
    #[error("round was aborted")]
    RoundAborted,
    #[error("sequence incomplete: {filled} of 12 positions filled")]
    IncompleteSequence { filled: usize },
}

/// Director-matcher pairing; the first letter is the director.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    HH,
    HA,
    AH,
    AA,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::HH => "HH",
            Condition::HA => "HA",
            Condition::AH => "AH",
            Condition::AA => "AA",
        }
    }

    /// Whether the given role is filled by a human in this condition.
    pub fn is_human(self, role: Role) -> bool {
        let code = self.as_str().as_bytes();
        let idx = match role {
            Role::Director => 0,
            Role::Matcher => 1,
        };
        code[idx] == b'H'
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "HH" => Ok(Condition::HH),
            "HA" => Ok(Condition::HA),
            "AH" => Ok(Condition::AH),
            "AA" => Ok(Condition::AA),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

/// Which system-prompt blocks agents receive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    /// Task text, role instructions, communication rules and reasoning scaffold.
    #[default]
    Full,
    /// Communication rules and the reasoning scaffold removed.
    Simple,
}

fn default_rounds() -> u32 {
    4
}

/// Chat messages per round before the round is aborted.
pub const DEFAULT_TURN_CAP: u32 = 120;

fn default_turn_cap() -> u32 {
    DEFAULT_TURN_CAP
}

fn default_distractors() -> usize {
    DEFAULT_DISTRACTORS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub condition: Condition,
    #[serde(default = "default_rounds")]
    pub n_rounds: u32,
    pub seed: u64,
    pub catalog: BasketCatalog,
    #[serde(default = "default_turn_cap")]
    pub turn_cap: u32,
    pub director: ParticipantSpec,
    pub matcher: ParticipantSpec,
    #[serde(default)]
    pub prompt_variant: PromptVariant,
    #[serde(default = "default_distractors")]
    pub n_distractors: usize,
    /// Free-form grouping label for sweeps (defaults to the condition code).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SessionConfig {
    pub fn new(
        condition: Condition,
        seed: u64,
        catalog: BasketCatalog,
        director: ParticipantSpec,
        matcher: ParticipantSpec,
    ) -> Self {
        SessionConfig {
            condition,
            n_rounds: default_rounds(),
            seed,
            catalog,
            turn_cap: default_turn_cap(),
            director,
            matcher,
            prompt_variant: PromptVariant::Full,
            n_distractors: DEFAULT_DISTRACTORS,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.condition.to_string())
    }

    pub fn participant(&self, role: Role) -> &ParticipantSpec {
        match role {
            Role::Director => &self.director,
            Role::Matcher => &self.matcher,
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: String| Err(GameError::InvalidConfig(m));
        if self.n_rounds < 1 {
            return bad("n_rounds must be at least 1".into());
        }
        if (self.turn_cap as usize) < 2 * N_TARGETS {
            return bad(format!("turn_cap must be at least {}", 2 * N_TARGETS));
        }
        if self.catalog.distractors().len() != self.n_distractors {
            return Err(GameError::InvalidCatalog(format!(
                "expected {} distractors, got {}",
                self.n_distractors,
                self.catalog.distractors().len()
            )));
        }
        for role in [Role::Director, Role::Matcher] {
            let spec = self.participant(role);
            if spec.role != role {
                return bad(format!("{role} slot holds a {} spec", spec.role));
            }
            spec.validate().map_err(GameError::InvalidConfig)?;
            let human = spec.kind == ParticipantKind::Human;
            if human != self.condition.is_human(role) {
                return bad(format!(
                    "condition {} does not match {role} kind {:?}",
                    self.condition, spec.kind
                ));
            }
            if spec.kind == ParticipantKind::Scripted {
                self.catalog.check_scripted_features()?;
            }
        }
        Ok(())
    }
}

/// One pair's experiment: config plus the rounds started so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    config: SessionConfig,
    rounds: Vec<Option<RoundState>>,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Result<Self, GameError> {
        config.validate()?;
        let rounds = vec![None; config.n_rounds as usize];
        Ok(SessionState { config, rounds })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn n_rounds(&self) -> u32 {
        self.config.n_rounds
    }

    pub fn round(&self, round_index: u32) -> Option<&RoundState> {
        let i = (round_index as usize).checked_sub(1)?;
        self.rounds.get(i)?.as_ref()
    }

    pub fn round_mut(&mut self, round_index: u32) -> Result<&mut RoundState, GameError> {
        self.check_range(round_index)?;
        self.rounds[round_index as usize - 1]
            .as_mut()
            .ok_or(GameError::RoundNotStarted(round_index))
    }

    /// Latest started round.
    pub fn current_round(&self) -> Option<&RoundState> {
        self.rounds.iter().rev().flatten().next()
    }

    pub fn rounds(&self) -> impl Iterator<Item = &RoundState> {
        self.rounds.iter().flatten()
    }

    pub fn pending_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.is_none()).count()
    }

    /// All rounds started and finished.
    pub fn is_complete(&self) -> bool {
        self.rounds.iter().all(|r| r.as_ref().is_some_and(RoundState::is_finished))
    }

    fn check_range(&self, round_index: u32) -> Result<(), GameError> {
        if round_index == 0 || round_index > self.config.n_rounds {
            return Err(GameError::RoundOutOfRange {
                round: round_index,
                n_rounds: self.config.n_rounds,
            });
        }
        Ok(())
    }

    /// Starts round `round_index` with permutations derived from `(seed, round_index)`.
    pub fn start_round(&mut self, round_index: u32) -> Result<&RoundState, GameError> {
        self.check_range(round_index)?;
        let i = round_index as usize - 1;
        if self.rounds[i].is_some() {
            return Err(GameError::RoundAlreadyStarted(round_index));
        }
        if i > 0 {
            match &self.rounds[i - 1] {
                Some(prev) if prev.is_finished() => {}
                _ => return Err(GameError::PreviousRoundUnfinished(round_index - 1)),
            }
        }
        let (director_order, pool_order) = round_permutations(&self.config, round_index);
        self.rounds[i] = Some(RoundState::new(round_index, director_order, pool_order));
        Ok(self.rounds[i].as_ref().expect("just inserted"))
    }
}

/// Director grid order and candidate pool order for one round.
pub fn round_permutations(config: &SessionConfig, round_index: u32) -> (Vec<BasketId>, Vec<BasketId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::from(round_index));
    let mut director: Vec<BasketId> = config.catalog.targets().iter().map(|e| e.id.clone()).collect();
    director.shuffle(&mut rng);
    let mut pool: Vec<BasketId> = config.catalog.all().map(|e| e.id.clone()).collect();
    pool.shuffle(&mut rng);
    (director, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::participants::ScriptedBehavior;

    fn config(seed: u64) -> SessionConfig {
        SessionConfig::new(
            Condition::AA,
            seed,
            BasketCatalog::builtin(),
            ParticipantSpec::scripted(Role::Director, ScriptedBehavior::Perfect),
            ParticipantSpec::scripted(Role::Matcher, ScriptedBehavior::Perfect),
        )
    }

    #[test]
    fn same_seed_same_session() {
        let mut a = SessionState::new(config(7)).unwrap();
        let mut b = SessionState::new(config(7)).unwrap();
        assert_eq!(a.start_round(1).unwrap(), b.start_round(1).unwrap());
    }

    #[test]
    fn four_pending_rounds() {
        let s = SessionState::new(config(1)).unwrap();
        assert_eq!(s.pending_rounds(), 4);
        assert!(s.current_round().is_none());
        assert!(!s.is_complete());
    }

    #[test]
    fn rounds_differ_and_are_reproducible() {
        let cfg = config(7);
        let (d1, p1) = round_permutations(&cfg, 1);
        let (d2, _) = round_permutations(&cfg, 2);
        assert_ne!(d1, d2);
        assert_eq!(round_permutations(&cfg, 1).1, p1);
    }

    #[test]
    fn round_gating() {
        let mut s = SessionState::new(config(7)).unwrap();
        assert!(matches!(s.start_round(2), Err(GameError::PreviousRoundUnfinished(1))));
        s.start_round(1).unwrap();
        assert!(matches!(s.start_round(1), Err(GameError::RoundAlreadyStarted(1))));
        assert!(matches!(s.start_round(2), Err(GameError::PreviousRoundUnfinished(1))));
        assert!(matches!(s.start_round(5), Err(GameError::RoundOutOfRange { .. })));
        assert!(matches!(s.start_round(0), Err(GameError::RoundOutOfRange { .. })));
        let r = s.round_mut(1).unwrap();
        for p in 1..=12 {
            r.apply_placement(p, p).unwrap();
        }
        r.score_round().unwrap();
        s.start_round(2).unwrap();
        assert_eq!(s.current_round().unwrap().round_index, 2);
    }

    #[test]
    fn config_validation() {
        let mut c = config(1);
        c.n_rounds = 0;
        assert!(SessionState::new(c).is_err());
        let mut c = config(1);
        c.turn_cap = 23;
        assert!(SessionState::new(c).is_err());
        let mut c = config(1);
        c.condition = Condition::HA;
        assert!(SessionState::new(c).is_err());
        let mut c = config(1);
        c.n_distractors = 4;
        assert!(matches!(SessionState::new(c), Err(GameError::InvalidCatalog(_))));
        let mut c = config(1);
        std::mem::swap(&mut c.director, &mut c.matcher);
        assert!(SessionState::new(c).is_err());
    }

    #[test]
    fn condition_roles() {
        assert!(Condition::HA.is_human(Role::Director));
        assert!(!Condition::HA.is_human(Role::Matcher));
        assert!(Condition::AH.is_human(Role::Matcher));
        assert_eq!("AA".parse::<Condition>().unwrap(), Condition::AA);
    }
}
