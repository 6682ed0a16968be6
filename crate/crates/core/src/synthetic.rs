//! Synthetic tagged corpora with designed entrainment and accuracy trends.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, Utterance};
use crate::game::{BasketCatalog, BasketId, Condition, PromptVariant, RoundResult};
use crate::participants::policy::{RE_CLOSE, RE_OPEN};
use crate::participants::{ParticipantKind, Role};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticParams {
    pub label: String,
    pub condition: Condition,
    pub n_pairs: usize,
    pub n_rounds: u32,
    /// Content tokens per RE in round 1.
    pub initial_len: usize,
    /// Each round's RE length is `round(shrink * previous)`.
    pub shrink: f64,
    /// Share of each RE's tokens reused from the same basket's previous RE.
    pub reuse: f64,
    /// Target mean accuracy per round, in percent.
    pub accuracy_by_round: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            label: "HH".into(),
            condition: Condition::HH,
            n_pairs: 25,
            n_rounds: 4,
            initial_len: 20,
            shrink: 0.8,
            reuse: 0.7,
            accuracy_by_round: vec![80.0, 84.0, 88.0, 92.0],
            seed: 0,
        }
    }
}

/// RE lengths per round: `initial_len`, then `round(shrink * previous)`.
pub fn designed_lengths(p: &SyntheticParams) -> Vec<usize> {
    let mut out = vec![p.initial_len];
    for _ in 1..p.n_rounds {
        let prev = *out.last().expect("non-empty") as f64;
        out.push(((p.shrink * prev).round() as usize).max(1));
    }
    out
}

/// Designed RLO per round (round 1 is 1.0 by convention).
pub fn designed_rlo(p: &SyntheticParams) -> Vec<f64> {
    designed_lengths(p)
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            if i == 0 {
                1.0
            } else {
                reuse_count(p.reuse, len) as f64 / len as f64
            }
        })
        .collect()
}

fn reuse_count(reuse: f64, len: usize) -> usize {
    ((reuse * len as f64).round() as usize).min(len)
}

/// Per-pair correct counts whose mean is as close as possible to `pct` of 12.
fn correct_counts(pct: f64, n_pairs: usize) -> Vec<usize> {
    let total = ((pct / 100.0) * 12.0 * n_pairs as f64).round() as usize;
    let total = total.min(12 * n_pairs);
    (0..n_pairs)
        .map(|i| total / n_pairs + usize::from(i < total % n_pairs))
        .collect()
}

/// Tagged dialogues (one per pair and round) built from the designed REs.
pub fn generate(p: &SyntheticParams) -> Vec<Dialogue> {
    let catalog = BasketCatalog::builtin();
    let ids: Vec<BasketId> = catalog.targets().iter().map(|e| e.id.clone()).collect();
    let lengths = designed_lengths(p);
    let kind = |role: Role| {
        if p.condition.is_human(role) {
            ParticipantKind::Human
        } else {
            ParticipantKind::Scripted
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut per_round_correct: Vec<Vec<usize>> = (0..p.n_rounds as usize)
        .map(|k| correct_counts(p.accuracy_by_round.get(k).copied().unwrap_or(100.0), p.n_pairs))
        .collect();
    for counts in &mut per_round_correct {
        counts.shuffle(&mut rng);
    }
    let mut out = Vec::new();
    for pair in 0..p.n_pairs {
        let pair_id = format!("{}-syn{:03}", p.label, pair + 1);
        let mut previous: Vec<Vec<String>> = vec![Vec::new(); ids.len()];
        let mut fresh = vec![0usize; ids.len()];
        let mut clock = 1_735_689_600_000u64 + pair as u64 * 10_000_000;
        for (k, &len) in lengths.iter().enumerate() {
            let round_index = k as u32 + 1;
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.shuffle(&mut rng);
            let start_ms = clock;
            let mut utterances = Vec::new();
            for (pos, &b) in order.iter().enumerate() {
                let keep = if k == 0 { 0 } else { reuse_count(p.reuse, len) };
                let mut tokens: Vec<String> = previous[b].choose_multiple(&mut rng, keep).cloned().collect();
                while tokens.len() < len {
                    fresh[b] += 1;
                    tokens.push(format!("lex{}x{}", b + 1, fresh[b]));
                }
                tokens.shuffle(&mut rng);
                clock += 4_000 + 250 * len as u64;
                utterances.push(Utterance {
                    actor: Role::Director,
                    text: format!("Basket {}: {RE_OPEN}{}{RE_CLOSE}.", pos + 1, tokens.join(" ")),
                    timestamp_ms: clock,
                });
                clock += 2_000;
                utterances.push(Utterance {
                    actor: Role::Matcher,
                    text: "Got it.".into(),
                    timestamp_ms: clock,
                });
                previous[b] = tokens;
            }
            let n_correct = per_round_correct[k][pair];
            let correctness = (0..ids.len()).map(|i| i < n_correct).collect();
            out.push(Dialogue {
                pair_id: pair_id.clone(),
                condition: p.condition,
                label: p.label.clone(),
                round_index,
                director_model: None,
                matcher_model: None,
                director_kind: kind(Role::Director),
                matcher_kind: kind(Role::Matcher),
                prompt_variant: PromptVariant::Full,
                target_ids: order.iter().map(|&b| ids[b].clone()).collect(),
                utterances,
                placements: Vec::new(),
                result: Some(RoundResult::from_correctness(correctness)),
                aborted: None,
                start_ms,
                duration_s: (clock - start_ms) as f64 / 1000.0,
            });
            clock += 30_000;
        }
    }
    out
}
