//! Per-dialogue effort counts, per-round entrainment measures and the combined row.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::{segment_turns, Dialogue, ReferringExpressionSet};
use crate::game::BasketId;
use crate::scalar::Real;

use super::overlap::{jaccard, rlo, rouge_l_f1};
use super::text::{tokenize_content, word_count};
use super::MetricsError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffortRow<T> {
    pub n_words: usize,
    pub n_turns: usize,
    pub n_utterances: usize,
    pub duration_s: T,
}

pub fn effort_row<T: Real>(dialogue: &Dialogue) -> EffortRow<T> {
    let n_words = dialogue.utterances.iter().map(|u| word_count(&u.text)).sum();
    EffortRow {
        n_words,
        n_turns: segment_turns(&dialogue.utterances).len(),
        n_utterances: dialogue.utterances.len(),
        duration_s: T::lit(dialogue.duration_s),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntrainmentRow<T> {
    pub round: u32,
    /// Content tokens summed over baskets.
    pub n_re_words: usize,
    /// Whitespace words summed over baskets.
    pub n_re_words_raw: usize,
    /// Mean over baskets against the previous round; 1.0 in the first round.
    pub rlo: T,
    pub jaccard: T,
    pub rouge_l: T,
    /// Set for the first round, whose overlaps are 1.0 by convention.
    pub baseline: bool,
}

fn mean_of<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().fold(T::zero(), |s, v| s + *v) / T::from_count(values.len()))
    }
}

/// Entrainment measures for one pair's RE sets (any order; sorted by round here).
/// Each basket is compared with its own RE from the closest earlier round.
pub fn entrainment_rows<T: Real>(sets: &[ReferringExpressionSet]) -> Result<Vec<EntrainmentRow<T>>, MetricsError> {
    let mut sorted: Vec<&ReferringExpressionSet> = sets.iter().collect();
    sorted.sort_by_key(|s| s.round_index);
    let Some(first) = sorted.first() else {
        return Ok(Vec::new());
    };
    let keys: BTreeSet<&BasketId> = first.res.keys().collect();
    let mut out = Vec::with_capacity(sorted.len());
    for (i, set) in sorted.iter().enumerate() {
        let these: BTreeSet<&BasketId> = set.res.keys().collect();
        if let Some(missing) = keys.symmetric_difference(&these).next() {
            return Err(MetricsError::MissingBasket(missing.to_string()));
        }
        let n_re_words = set.res.values().map(|re| tokenize_content(re).len()).sum();
        let n_re_words_raw = set.res.values().map(|re| word_count(re)).sum();
        let row = if i == 0 {
            EntrainmentRow {
                round: set.round_index,
                n_re_words,
                n_re_words_raw,
                rlo: T::one(),
                jaccard: T::one(),
                rouge_l: T::one(),
                baseline: true,
            }
        } else {
            let prev = sorted[i - 1];
            let (mut r, mut j, mut g) = (Vec::new(), Vec::new(), Vec::new());
            for (id, curr) in &set.res {
                let before = &prev.res[id];
                if let Ok(v) = rlo::<T>(before, curr) {
                    r.push(v);
                }
                if let Ok(v) = jaccard::<T>(before, curr) {
                    j.push(v);
                }
                g.push(rouge_l_f1::<T>(before, curr));
            }
            EntrainmentRow {
                round: set.round_index,
                n_re_words,
                n_re_words_raw,
                rlo: mean_of(&r).unwrap_or(T::zero()),
                jaccard: mean_of(&j).unwrap_or(T::zero()),
                rouge_l: mean_of(&g).unwrap_or(T::zero()),
                baseline: false,
            }
        };
        out.push(row);
    }
    Ok(out)
}

/// Everything measured for one pair in one round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow<T> {
    pub pair_id: String,
    pub label: String,
    pub condition: String,
    pub round: u32,
    pub aborted: bool,
    pub accuracy_pct: Option<T>,
    pub n_words: usize,
    pub n_turns: usize,
    pub n_utterances: usize,
    pub duration_s: T,
    pub n_re_words: Option<usize>,
    pub n_re_words_raw: Option<usize>,
    /// Undefined in the first round.
    pub rlo: Option<T>,
    pub jaccard: Option<T>,
    pub rouge_l: Option<T>,
    /// Reserved for embedding similarity; never computed here.
    pub sbert_cosine: Option<T>,
}

/// Builds one row per dialogue. RE metrics are filled where a pair has a complete
/// set of REs; anything skipped is reported in the returned warnings.
pub fn compute_rows<T: Real>(
    dialogues: &[Dialogue],
    re_sets: &[ReferringExpressionSet],
) -> (Vec<MetricsRow<T>>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut by_pair: BTreeMap<&str, Vec<ReferringExpressionSet>> = BTreeMap::new();
    for s in re_sets {
        by_pair.entry(s.pair_id.as_str()).or_default().push(s.clone());
    }
    let mut entrainment: BTreeMap<(String, u32), EntrainmentRow<T>> = BTreeMap::new();
    for (pair, sets) in &by_pair {
        match entrainment_rows::<T>(sets) {
            Ok(rows) => {
                for r in rows {
                    entrainment.insert((pair.to_string(), r.round), r);
                }
            }
            Err(e) => warnings.push(format!("pair {pair}: RE metrics skipped ({e})")),
        }
    }
    let rows = dialogues
        .iter()
        .map(|d| {
            let effort = effort_row::<T>(d);
            let ent = entrainment.get(&(d.pair_id.clone(), d.round_index));
            if ent.is_none() && !by_pair.is_empty() {
                warnings.push(format!("pair {} round {}: no referring expressions", d.pair_id, d.round_index));
            }
            let overlap = |f: fn(&EntrainmentRow<T>) -> T| ent.filter(|e| !e.baseline).map(f);
            MetricsRow {
                pair_id: d.pair_id.clone(),
                label: d.label.clone(),
                condition: d.condition.to_string(),
                round: d.round_index,
                aborted: d.aborted.is_some(),
                accuracy_pct: d.accuracy_pct().map(T::lit),
                n_words: effort.n_words,
                n_turns: effort.n_turns,
                n_utterances: effort.n_utterances,
                duration_s: effort.duration_s,
                n_re_words: ent.map(|e| e.n_re_words),
                n_re_words_raw: ent.map(|e| e.n_re_words_raw),
                rlo: overlap(|e| e.rlo),
                jaccard: overlap(|e| e.jaccard),
                rouge_l: overlap(|e| e.rouge_l),
                sbert_cosine: None,
            }
        })
        .collect();
    (rows, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::game::{Condition, PromptVariant};
    use crate::participants::{ParticipantKind, Role};

    fn dialogue(lines: &[(Role, &str)]) -> Dialogue {
        Dialogue {
            pair_id: "p".into(),
            condition: Condition::HH,
            label: "HH".into(),
            round_index: 1,
            director_model: None,
            matcher_model: None,
            director_kind: ParticipantKind::Human,
            matcher_kind: ParticipantKind::Human,
            prompt_variant: PromptVariant::Full,
            target_ids: Vec::new(),
            utterances: lines
                .iter()
                .map(|(a, t)| Utterance { actor: *a, text: t.to_string(), timestamp_ms: 0 })
                .collect(),
            placements: Vec::new(),
            result: None,
            aborted: None,
            start_ms: 0,
            duration_s: 12.5,
        }
    }

    #[test]
    fn effort_examples() {
        let e = effort_row::<f64>(&dialogue(&[(Role::Director, "a b"), (Role::Matcher, "c")]));
        assert_eq!((e.n_words, e.n_turns, e.n_utterances), (3, 2, 2));
        let e = effort_row::<f64>(&dialogue(&[(Role::Director, "a"), (Role::Director, "b"), (Role::Matcher, "c")]));
        assert_eq!((e.n_turns, e.n_utterances), (2, 3));
        assert_eq!(e.duration_s, 12.5);
        let mut empty = dialogue(&[]);
        empty.duration_s = 0.0;
        let e = effort_row::<f32>(&empty);
        assert_eq!((e.n_words, e.n_turns, e.n_utterances, e.duration_s), (0, 0, 0, 0.0));
    }

    fn set(round: u32, res: &[(&str, &str)]) -> ReferringExpressionSet {
        ReferringExpressionSet {
            pair_id: "p".into(),
            round_index: round,
            res: res.iter().map(|(k, v)| (BasketId::new(*k), v.to_string())).collect(),
        }
    }

    #[test]
    fn two_basket_toy_set() {
        let sets = [
            set(1, &[("a", "tall wicker hamper"), ("b", "the small red box with lid")]),
            set(2, &[("a", "tall hamper"), ("b", "red lid thing")]),
        ];
        let rows = entrainment_rows::<f64>(&sets).unwrap();
        assert_eq!(rows[0].n_re_words, 3 + 4);
        assert_eq!(rows[0].n_re_words_raw, 3 + 6);
        assert!(rows[0].baseline && rows[0].rlo == 1.0);
        assert_eq!(rows[1].n_re_words, 2 + 3);
        // a: 2/2, b: {red, lid} of {red, lid, thing} -> 2/3
        assert!((rows[1].rlo - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        // a: {tall,hamper}/{tall,wicker,hamper}; b: {red,lid}/{small,red,box,lid,thing}
        assert!((rows[1].jaccard - (2.0 / 3.0 + 2.0 / 5.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_res_overlap_fully_and_missing_baskets_error() {
        let rows = entrainment_rows::<f64>(&[set(1, &[("a", "red box")]), set(2, &[("a", "red box")])]).unwrap();
        assert_eq!(rows[1].rlo, 1.0);
        assert!(matches!(
            entrainment_rows::<f64>(&[set(1, &[("a", "x")]), set(2, &[("b", "x")])]),
            Err(MetricsError::MissingBasket(_))
        ));
    }
}
