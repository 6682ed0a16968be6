use serde::{Deserialize, Serialize};

use super::catalog::{BasketId, N_TARGETS};
use super::GameError;

/// Outcome of a submitted round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub per_position_correct: Vec<bool>,
    pub accuracy_pct: f64,
}

impl RoundResult {
    pub fn from_correctness(per_position_correct: Vec<bool>) -> Self {
        let n_correct = per_position_correct.iter().filter(|c| **c).count();
        let accuracy_pct = 100.0 * n_correct as f64 / per_position_correct.len() as f64;
        RoundResult {
            per_position_correct,
            accuracy_pct,
        }
    }

    pub fn n_correct(&self) -> usize {
        self.per_position_correct.iter().filter(|c| **c).count()
    }
}

/// State of one round. Candidate tiles and sequence positions are 1-based,
/// matching what the participants see on screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub round_index: u32,
    /// Target ids in director grid order (positions 1-12, row-major 2x6).
    pub director_order: Vec<BasketId>,
    /// All catalog ids in candidate-tile order (tiles 1..=pool size).
    pub pool_order: Vec<BasketId>,
    /// Candidate tile occupying each position, `None` when empty.
    pub slots: Vec<Option<usize>>,
    pub submitted: bool,
    pub result: Option<RoundResult>,
    /// Set when the round ended without a scored submission.
    pub aborted: Option<String>,
}

impl RoundState {
    pub fn new(round_index: u32, director_order: Vec<BasketId>, pool_order: Vec<BasketId>) -> Self {
        RoundState {
            round_index,
            slots: vec![None; director_order.len()],
            director_order,
            pool_order,
            submitted: false,
            result: None,
            aborted: None,
        }
    }

    pub fn n_positions(&self) -> usize {
        self.slots.len()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_order.len()
    }

    /// Submitted (and scored) or aborted.
    pub fn is_finished(&self) -> bool {
        self.submitted || self.aborted.is_some()
    }

    fn check_open(&self) -> Result<(), GameError> {
        if self.submitted {
            return Err(GameError::RoundSubmitted);
        }
        if self.aborted.is_some() {
            return Err(GameError::RoundAborted);
        }
        Ok(())
    }

    fn check_tile(&self, tile: usize) -> Result<(), GameError> {
        if tile == 0 || tile > self.pool_size() {
            return Err(GameError::TileOutOfRange {
                tile,
                max: self.pool_size(),
            });
        }
        Ok(())
    }

    fn check_position(&self, position: usize) -> Result<(), GameError> {
        if position == 0 || position > self.n_positions() {
            return Err(GameError::PositionOutOfRange {
                position,
                max: self.n_positions(),
            });
        }
        Ok(())
    }

    /// Moves `tile` into `position`. A tile already placed elsewhere leaves its old
    /// slot empty; a tile already sitting in `position` goes back to the pool.
    pub fn apply_placement(&mut self, tile: usize, position: usize) -> Result<(), GameError> {
        self.check_open()?;
        self.check_tile(tile)?;
        self.check_position(position)?;
        if let Some(previous) = self.position_of_tile(tile) {
            self.slots[previous - 1] = None;
        }
        self.slots[position - 1] = Some(tile);
        Ok(())
    }

    /// Empties `position`; a no-op when it is already empty.
    pub fn clear_position(&mut self, position: usize) -> Result<(), GameError> {
        self.check_open()?;
        self.check_position(position)?;
        self.slots[position - 1] = None;
        Ok(())
    }

    pub fn can_submit(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    pub fn filled_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Lowest-numbered empty position, 1-based.
    pub fn lowest_empty(&self) -> Option<usize> {
        self.slots.iter().position(Option::is_none).map(|i| i + 1)
    }

    /// Position currently holding `tile`, 1-based.
    pub fn position_of_tile(&self, tile: usize) -> Option<usize> {
        self.slots.iter().position(|s| *s == Some(tile)).map(|i| i + 1)
    }

    pub fn basket_at_tile(&self, tile: usize) -> Option<&BasketId> {
        tile.checked_sub(1).and_then(|i| self.pool_order.get(i))
    }

    pub fn tile_of_basket(&self, id: &BasketId) -> Option<usize> {
        self.pool_order.iter().position(|b| b == id).map(|i| i + 1)
    }

    /// Basket id the director sees at `position`, 1-based.
    pub fn target_at(&self, position: usize) -> Option<&BasketId> {
        position.checked_sub(1).and_then(|i| self.director_order.get(i))
    }

    /// Scores the final sequence and marks the round submitted.
    pub fn score_round(&mut self) -> Result<RoundResult, GameError> {
        self.check_open()?;
        if !self.can_submit() {
            return Err(GameError::IncompleteSequence {
                filled: self.filled_count(),
            });
        }
        let correct = self
            .slots
            .iter()
            .zip(&self.director_order)
            .map(|(slot, target)| {
                slot.and_then(|tile| self.basket_at_tile(tile)) == Some(target)
            })
            .collect();
        let result = RoundResult::from_correctness(correct);
        self.submitted = true;
        self.result = Some(result.clone());
        Ok(result)
    }

    pub fn abort(&mut self, reason: impl Into<String>) -> Result<(), GameError> {
        self.check_open()?;
        self.aborted = Some(reason.into());
        Ok(())
    }

    /// Checks the structural invariants; used by tests and replay verification.
    pub fn check_invariants(&self, target_ids: &[BasketId], all_ids: &[BasketId]) -> Result<(), String> {
        let sorted = |v: &[BasketId]| {
            let mut v = v.to_vec();
            v.sort();
            v
        };
        if sorted(&self.director_order) != sorted(target_ids) {
            return Err("director_order is not a permutation of the targets".into());
        }
        if sorted(&self.pool_order) != sorted(all_ids) {
            return Err("pool_order is not a permutation of the catalog".into());
        }
        if self.slots.len() != N_TARGETS.min(self.director_order.len()) {
            return Err("wrong slot count".into());
        }
        let mut seen = std::collections::HashSet::new();
        for tile in self.slots.iter().flatten() {
            if *tile == 0 || *tile > self.pool_size() {
                return Err(format!("tile {tile} out of range"));
            }
            if !seen.insert(*tile) {
                return Err(format!("tile {tile} occupies two slots"));
            }
        }
        if self.submitted && !self.can_submit() {
            return Err("submitted with empty slots".into());
        }
        Ok(())
    }
}
