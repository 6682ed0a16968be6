use proptest::prelude::*;

use refgame_core::corpus::{
    dialogues_from_events, flatten, read_jsonl, segment_turns, write_jsonl, Turn, Utterance,
};
use refgame_core::game::{round_permutations, BasketCatalog, BasketId, Condition, RoundState, SessionConfig};
use refgame_core::metrics::{jaccard, rlo};
use refgame_core::participants::{
    build_director_prompt, build_matcher_prompt, parse_matcher_reply, ParticipantSpec, RoundLimits, Role,
    ScriptedBehavior,
};
use refgame_core::sim::simulate_session;
use refgame_core::transcript::MockClock;

fn scripted_config(seed: u64, director: ScriptedBehavior, matcher: ScriptedBehavior) -> SessionConfig {
    SessionConfig::new(
        Condition::AA,
        seed,
        BasketCatalog::builtin(),
        ParticipantSpec::scripted(Role::Director, director),
        ParticipantSpec::scripted(Role::Matcher, matcher),
    )
}

fn fresh_round(seed: u64) -> (SessionConfig, RoundState) {
    let cfg = scripted_config(seed, ScriptedBehavior::Perfect, ScriptedBehavior::Perfect);
    let (d, p) = round_permutations(&cfg, 1);
    (cfg, RoundState::new(1, d, p))
}

fn ids(cfg: &SessionConfig) -> (Vec<BasketId>, Vec<BasketId>) {
    (
        cfg.catalog.targets().iter().map(|e| e.id.clone()).collect(),
        cfg.catalog.all().map(|e| e.id.clone()).collect(),
    )
}

#[derive(Clone, Debug)]
enum Op {
    Place(usize, usize),
    Clear(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0usize..20, 0usize..14).prop_map(|(t, p)| Op::Place(t, p)),
        1 => (0usize..14).prop_map(Op::Clear),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn slots_stay_exclusive(seed in any::<u64>(), ops in prop::collection::vec(op(), 0..80)) {
        let (cfg, mut round) = fresh_round(seed);
        let (targets, all) = ids(&cfg);
        for op in ops {
            let before = round.clone();
            let res = match op {
                Op::Place(t, p) => round.apply_placement(t, p),
                Op::Clear(p) => round.clear_position(p),
            };
            if res.is_err() {
                prop_assert_eq!(&round, &before);
            }
            prop_assert!(round.check_invariants(&targets, &all).is_ok());
            let placed: Vec<usize> = round.slots.iter().flatten().copied().collect();
            let mut dedup = placed.clone();
            dedup.sort();
            dedup.dedup();
            prop_assert_eq!(placed.len(), dedup.len());
        }
    }

    #[test]
    fn permutations_are_deterministic_and_valid(seed in any::<u64>(), k in 1u32..=4) {
        let cfg = scripted_config(seed, ScriptedBehavior::Perfect, ScriptedBehavior::Perfect);
        let a = round_permutations(&cfg, k);
        prop_assert_eq!(&a, &round_permutations(&cfg, k));
        let (targets, all) = ids(&cfg);
        let round = RoundState::new(k, a.0, a.1);
        prop_assert!(round.check_invariants(&targets, &all).is_ok());
    }

    #[test]
    fn score_matches_direct_count(seed in any::<u64>(), tiles in Just((1usize..=18).collect::<Vec<_>>()).prop_shuffle()) {
        let (_, mut round) = fresh_round(seed);
        for (i, t) in tiles.iter().take(12).enumerate() {
            round.apply_placement(*t, i + 1).unwrap();
        }
        let expected = (1..=12)
            .filter(|p| {
                let tile = round.slots[p - 1].unwrap();
                round.pool_order[tile - 1] == round.director_order[p - 1]
            })
            .count();
        let result = round.score_round().unwrap();
        prop_assert_eq!(result.n_correct(), expected);
        prop_assert!((result.accuracy_pct - 100.0 * expected as f64 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn random_wellformed_matcher_replies_never_corrupt_state(
        seed in any::<u64>(),
        replies in prop::collection::vec(
            (prop::option::of(0usize..20), prop::option::of(0usize..14), any::<bool>(), prop::option::of(0usize..20), prop::collection::vec(0usize..20, 0..3)),
            1..40,
        ),
    ) {
        let (cfg, mut round) = fresh_round(seed);
        let (targets, all) = ids(&cfg);
        for (cand, pos, ready, guess, confusions) in replies {
            let raw = serde_json::json!({
                "reasoning": {
                    "target_position": pos.unwrap_or(1),
                    "shared_features": [],
                    "distinctive_features": [],
                    "best_guess_candidate_index": guess,
                    "likely_confusions": confusions,
                    "discriminative_question": ""
                },
                "utterance": "ok",
                "selection": {"candidate_index": cand, "position": pos, "ready_to_submit": ready}
            })
            .to_string();
            if let Ok(reply) = parse_matcher_reply(&raw, &round) {
                if let Some((t, p)) = reply.placement(&round) {
                    round.apply_placement(t, p).expect("accepted reply must apply");
                }
                if reply.selection.ready_to_submit {
                    prop_assert!(round.can_submit());
                }
            }
            prop_assert!(round.check_invariants(&targets, &all).is_ok());
        }
    }

    #[test]
    fn segmentation_is_idempotent(actors in prop::collection::vec(any::<bool>(), 0..40)) {
        let utterances: Vec<Utterance> = actors
            .iter()
            .enumerate()
            .map(|(i, d)| Utterance {
                actor: if *d { Role::Director } else { Role::Matcher },
                text: format!("m{i}"),
                timestamp_ms: i as u64,
            })
            .collect();
        let turns: Vec<Turn> = segment_turns(&utterances);
        prop_assert_eq!(flatten(&turns), utterances.clone());
        prop_assert_eq!(segment_turns(&flatten(&turns)), turns.clone());
        for w in turns.windows(2) {
            prop_assert_ne!(w[0].actor, w[1].actor);
        }
    }

    #[test]
    fn overlap_metrics_are_bounded(prev in "[a-z ]{0,40}", curr in "[a-z ]{1,40}") {
        if let Ok(v) = rlo::<f64>(&prev, &curr) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let Ok(v) = jaccard::<f64>(&prev, &curr) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if rlo::<f64>(&curr, &curr).is_ok() {
            prop_assert_eq!(rlo::<f64>(&curr, &curr).unwrap(), 1.0);
            prop_assert_eq!(jaccard::<f64>(&curr, &curr).unwrap(), 1.0);
        }
    }

    #[test]
    fn dropping_novel_tokens_never_lowers_rlo(
        prev in prop::collection::vec(prop::sample::select(vec!["red", "tan", "oval", "tall", "lid"]), 1..8),
        curr in prop::collection::vec(prop::sample::select(vec!["red", "tan", "oval", "gray", "rim", "knot"]), 1..8),
        drop_mask in prop::collection::vec(any::<bool>(), 8),
    ) {
        let before = rlo::<f64>(&prev.join(" "), &curr.join(" ")).unwrap();
        let kept: Vec<&str> = curr
            .iter()
            .zip(drop_mask.iter().chain(std::iter::repeat(&false)))
            .filter(|(t, drop)| !(**drop && !prev.contains(t)))
            .map(|(t, _)| *t)
            .collect();
        if !kept.is_empty() {
            let after = rlo::<f64>(&prev.join(" "), &kept.join(" ")).unwrap();
            prop_assert!(after >= before - 1e-15);
        }
    }
}

#[test]
fn perfect_pairs_score_100_over_60_seeds() {
    for seed in 0..60u64 {
        let cfg = scripted_config(seed, ScriptedBehavior::Perfect, ScriptedBehavior::Perfect);
        let clock = MockClock::new(MockClock::EPOCH_MS);
        let sim = simulate_session("s", cfg, None, RoundLimits::default(), &clock).unwrap();
        for r in sim.state.rounds() {
            assert_eq!(r.result.as_ref().unwrap().accuracy_pct, 100.0, "seed {seed}");
        }
    }
}

#[test]
fn terse_and_noisy_pairs_finish_every_round() {
    for seed in 0..20u64 {
        for (d, m) in [
            (ScriptedBehavior::Terse, ScriptedBehavior::Perfect),
            (ScriptedBehavior::Noisy(0.5), ScriptedBehavior::Perfect),
            (ScriptedBehavior::Perfect, ScriptedBehavior::Noisy(0.3)),
        ] {
            let cfg = scripted_config(seed, d, m);
            let clock = MockClock::new(0);
            let sim = simulate_session("s", cfg, None, RoundLimits::default(), &clock).unwrap();
            assert_eq!(sim.n_aborted(), 0, "seed {seed} {d:?} {m:?}");
            if m == ScriptedBehavior::Perfect {
                for r in sim.state.rounds() {
                    assert_eq!(r.result.as_ref().unwrap().accuracy_pct, 100.0, "seed {seed} {d:?}");
                }
            }
        }
    }
}

#[test]
fn jsonl_round_trip_is_identity() {
    let cfg = scripted_config(5, ScriptedBehavior::Noisy(0.4), ScriptedBehavior::Perfect);
    let clock = MockClock::new(MockClock::EPOCH_MS);
    let sim = simulate_session("pair-5", cfg.clone(), None, RoundLimits::default(), &clock).unwrap();
    let dialogues = dialogues_from_events("pair-5", &cfg, sim.log.events()).unwrap();
    assert_eq!(dialogues.len(), 4);
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &dialogues).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 4);
    assert_eq!(read_jsonl(buf.as_slice()).unwrap(), dialogues);
}

#[test]
fn prompt_assembly_is_pure() {
    let cfg = scripted_config(9, ScriptedBehavior::Perfect, ScriptedBehavior::Perfect);
    let clock = MockClock::new(0);
    let sim = simulate_session("s", cfg, None, RoundLimits::default(), &clock).unwrap();
    let round = sim.state.round(3).unwrap();
    let history = refgame_core::participants::round_history(&sim.log, 3);
    assert_eq!(
        build_director_prompt(&sim.state, round, &history),
        build_director_prompt(&sim.state, round, &history)
    );
    let a = build_matcher_prompt(&sim.state, round, &history);
    assert_eq!(a, build_matcher_prompt(&sim.state, round, &history));
    assert!(a.context_messages[0].text.starts_with("PREVIOUS ROUND FEEDBACK (round 2)"));
}
