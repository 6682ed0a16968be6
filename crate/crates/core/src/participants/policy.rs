//! Deterministic oracle policies for scripted directors and matchers.
//!
//! Both policies are pure functions of the round's chat history and a symbolic view
//! of what the role can see (feature tags instead of images), so they can be replayed
//! after a restart and reused by the mock completion provider.
//!
//! Scripted directors wrap every referring expression in `«` and `»`, e.g.
//! `Basket 3: «oval, rattan, single arch handle, dark brown».`, which makes the
//! ground-truth referring expressions recoverable from the transcript.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::prompt::ChatLine;
use super::spec::{Role, ScriptedBehavior};

pub type FeatureSet = BTreeSet<String>;

pub const RE_OPEN: char = '«';
pub const RE_CLOSE: char = '»';

/// Director's end-of-round message.
pub const CLOSING: &str = "That was the last basket. Please submit when you are ready.";

static OWN_DESCRIPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:Basket (\d+):|Let me clarify basket (\d+) again:)").unwrap());
static CLARIFY_REQUEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)can you clarify basket (\d+)").unwrap());
static REDESCRIBE_REQUEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)can you describe basket (\d+) again").unwrap());
static BASKET_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bbasket (\d{1,2})\b").unwrap());
static TAGGED_PHRASE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"«([^»]*)»").unwrap());

/// Canonical phrase for a feature list: tags joined by ", ".
pub fn phrase_of<'a>(features: impl IntoIterator<Item = &'a String>) -> String {
    features.into_iter().map(String::as_str).collect::<Vec<_>>().join(", ")
}

pub fn parse_phrase(phrase: &str) -> FeatureSet {
    phrase
        .split(',')
        .map(|f| f.trim().to_lowercase())
        .filter(|f| !f.is_empty())
        .collect()
}

/// All `«...»` phrases in a message, in order.
pub fn tagged_phrases(text: &str) -> Vec<String> {
    TAGGED_PHRASE
        .captures_iter(text)
        .map(|c| c[1].trim().to_string())
        .collect()
}

fn noise_rng(seed: u64, round: u32, role: Role, position: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_a9e7);
    let role_bit = match role {
        Role::Director => 0,
        Role::Matcher => 1,
    };
    rng.set_stream((u64::from(round) << 40) | (role_bit << 39) | ((position as u64) << 20) | k as u64);
    rng
}

/// What a scripted director sees: its 2x6 grid in position order.
#[derive(Clone, Debug)]
pub struct DirectorView<'a> {
    pub round_index: u32,
    pub grid: Vec<&'a FeatureSet>,
    pub behavior: ScriptedBehavior,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectorMove {
    /// Basket position described, `None` for the closing message.
    pub position: Option<usize>,
    pub utterance: String,
    pub features: Vec<String>,
    pub shared: Vec<String>,
    pub confusions: Vec<usize>,
}

enum PartnerSignal {
    Clarify(usize),
    Redescribe(usize),
    Question,
    Confirm,
}

fn partner_signal(text: &str) -> PartnerSignal {
    if let Some(c) = CLARIFY_REQUEST.captures(text) {
        if let Ok(n) = c[1].parse() {
            return PartnerSignal::Clarify(n);
        }
    }
    if let Some(c) = REDESCRIBE_REQUEST.captures(text) {
        if let Ok(n) = c[1].parse() {
            return PartnerSignal::Redescribe(n);
        }
    }
    if text.trim_end().ends_with('?') {
        return PartnerSignal::Question;
    }
    PartnerSignal::Confirm
}

/// Smallest subset of `grid[target]`'s features that no other grid entry contains.
pub fn minimal_unique_subset(grid: &[&FeatureSet], target: usize) -> Vec<String> {
    let feats: Vec<&String> = grid[target].iter().collect();
    let n = feats.len();
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let subset: Vec<&String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| feats[i]).collect();
        let unique = grid
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .all(|(_, other)| !subset.iter().all(|f| other.contains(*f)));
        if unique {
            let mut out: Vec<String> = subset.into_iter().cloned().collect();
            out.sort();
            return out;
        }
    }
    feats.into_iter().cloned().collect()
}

impl DirectorView<'_> {
    fn describe(&self, position: usize, repair: bool) -> DirectorMove {
        let idx = position - 1;
        let target = self.grid[idx];
        let features: Vec<String> = if repair {
            target.iter().cloned().collect()
        } else {
            match self.behavior {
                ScriptedBehavior::Perfect => target.iter().cloned().collect(),
                ScriptedBehavior::Terse if self.round_index >= 2 => minimal_unique_subset(&self.grid, idx),
                ScriptedBehavior::Terse => target.iter().cloned().collect(),
                ScriptedBehavior::Noisy(p) => {
                    let mut rng = noise_rng(self.seed, self.round_index, Role::Director, position, 0);
                    if rng.random_bool(p) {
                        let pick = rng.random_range(0..target.len());
                        vec![target.iter().nth(pick).expect("in range").clone()]
                    } else {
                        target.iter().cloned().collect()
                    }
                }
            }
        };
        let phrase = phrase_of(&features);
        let utterance = if repair {
            format!("Let me clarify basket {position} again: {RE_OPEN}{phrase}{RE_CLOSE}.")
        } else {
            format!("Basket {position}: {RE_OPEN}{phrase}{RE_CLOSE}.")
        };
        let mut confusions = Vec::new();
        let mut shared = BTreeSet::new();
        for (i, other) in self.grid.iter().enumerate() {
            if i == idx {
                continue;
            }
            let common: Vec<&String> = target.intersection(other).collect();
            if common.len() >= 2 {
                confusions.push(i + 1);
            }
            shared.extend(common.into_iter().cloned());
        }
        DirectorMove {
            position: Some(position),
            utterance,
            features,
            shared: shared.into_iter().collect(),
            confusions,
        }
    }

    fn closing(&self) -> DirectorMove {
        DirectorMove {
            position: None,
            utterance: CLOSING.to_string(),
            features: Vec::new(),
            shared: Vec::new(),
            confusions: Vec::new(),
        }
    }
}

/// Next director message given the round's chat so far.
pub fn director_move(view: &DirectorView<'_>, history: &[ChatLine]) -> DirectorMove {
    let n = view.grid.len();
    let frontier = history
        .iter()
        .filter(|l| l.speaker == Role::Director)
        .filter_map(|l| OWN_DESCRIPTION.captures(&l.text))
        .filter_map(|c| c.get(1).or_else(|| c.get(2)).and_then(|m| m.as_str().parse::<usize>().ok()))
        .max()
        .unwrap_or(0);
    let partner_last = match history.last() {
        Some(line) if line.speaker == Role::Matcher => Some(line.text.as_str()),
        _ => None,
    };
    if frontier == 0 {
        return view.describe(1, false);
    }
    let signal = partner_last.map_or(PartnerSignal::Confirm, partner_signal);
    match signal {
        PartnerSignal::Clarify(p) | PartnerSignal::Redescribe(p) if (1..=n).contains(&p) => view.describe(p, true),
        PartnerSignal::Question if frontier <= n => view.describe(frontier.min(n), true),
        _ if frontier < n => view.describe(frontier + 1, false),
        _ => view.closing(),
    }
}

/// What a scripted matcher sees: the candidate pool in tile order and its sequence.
#[derive(Clone, Debug)]
pub struct MatcherView<'a> {
    pub round_index: u32,
    pub pool: Vec<&'a FeatureSet>,
    pub slots: &'a [Option<usize>],
    pub behavior: ScriptedBehavior,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatcherMove {
    pub utterance: String,
    pub target_position: usize,
    pub best_guess: Option<usize>,
    pub confusions: Vec<usize>,
    pub distinctive: Vec<String>,
    /// (tile, position) to place, both 1-based.
    pub placement: Option<(usize, usize)>,
    pub submit: bool,
}

impl MatcherView<'_> {
    fn lowest_empty(&self) -> Option<usize> {
        self.slots.iter().position(Option::is_none).map(|i| i + 1)
    }

    fn is_placed(&self, tile: usize) -> bool {
        self.slots.contains(&Some(tile))
    }

    fn say(&self, utterance: String, target_position: usize) -> MatcherMove {
        MatcherMove {
            utterance,
            target_position,
            best_guess: None,
            confusions: Vec::new(),
            distinctive: Vec::new(),
            placement: None,
            submit: false,
        }
    }

    /// Tiles matching a description; tagged descriptions need every tag, free text
    /// keeps the tiles with the most tag hits.
    fn candidates(&self, text: &str) -> (Vec<usize>, Vec<String>) {
        if let Some(phrase) = tagged_phrases(text).pop() {
            let described = parse_phrase(&phrase);
            let tiles = (1..=self.pool.len())
                .filter(|t| described.is_subset(self.pool[t - 1]))
                .collect();
            return (tiles, described.into_iter().collect());
        }
        let lower = text.to_lowercase();
        let hits: Vec<(usize, Vec<String>)> = self
            .pool
            .iter()
            .enumerate()
            .map(|(i, feats)| {
                let found = feats
                    .iter()
                    .filter(|f| {
                        Regex::new(&format!(r"\b{}\b", regex::escape(f)))
                            .map(|re| re.is_match(&lower))
                            .unwrap_or(false)
                    })
                    .cloned()
                    .collect::<Vec<_>>();
                (i + 1, found)
            })
            .collect();
        let best = hits.iter().map(|(_, f)| f.len()).max().unwrap_or(0);
        if best == 0 {
            return (Vec::new(), Vec::new());
        }
        let tiles: Vec<usize> = hits.iter().filter(|(_, f)| f.len() == best).map(|(t, _)| *t).collect();
        let mut used: BTreeSet<String> = BTreeSet::new();
        for (t, f) in &hits {
            if tiles.contains(t) {
                used.extend(f.iter().cloned());
            }
        }
        (tiles, used.into_iter().collect())
    }
}

fn is_submit_prompt(text: &str) -> bool {
    text.contains(CLOSING) || text.to_lowercase().contains("please submit")
}

/// Next matcher action given the round's chat so far.
pub fn matcher_move(view: &MatcherView<'_>, history: &[ChatLine]) -> MatcherMove {
    let n_positions = view.slots.len();
    let lowest = view.lowest_empty();
    let Some(director_line) = history.iter().rev().find(|l| l.speaker == Role::Director) else {
        return view.say("Ready when you are. Please describe basket 1.".into(), 1);
    };
    let text = director_line.text.as_str();

    if is_submit_prompt(text) {
        return match lowest {
            None => MatcherMove {
                submit: true,
                ..view.say("All 12 positions are filled. Submitting our sequence now.".into(), n_positions)
            },
            Some(p) => view.say(format!("Position {p} is still empty. Can you describe basket {p} again?"), p),
        };
    }

    let position = BASKET_NUMBER
        .captures(text)
        .and_then(|c| c[1].parse::<usize>().ok())
        .filter(|p| (1..=n_positions).contains(p))
        .or(lowest);
    let Some(position) = position else {
        return view.say("All positions are filled. Should I submit now?".into(), n_positions);
    };

    let (candidates, distinctive) = view.candidates(text);
    let unplaced: Vec<usize> = candidates.iter().copied().filter(|t| !view.is_placed(*t)).collect();
    let n_matcher_lines = history.iter().filter(|l| l.speaker == Role::Matcher).count();

    if let ScriptedBehavior::Noisy(p) = view.behavior {
        let mut rng = noise_rng(view.seed, view.round_index, Role::Matcher, position, n_matcher_lines);
        if rng.random_bool(p) {
            let wrong: Vec<usize> = (1..=view.pool.len())
                .filter(|t| !view.is_placed(*t) && !candidates.contains(t))
                .collect();
            if !wrong.is_empty() {
                let tile = wrong[rng.random_range(0..wrong.len())];
                return MatcherMove {
                    utterance: format!("Got it, I placed that basket in position {position}."),
                    target_position: position,
                    best_guess: Some(tile),
                    confusions: Vec::new(),
                    distinctive,
                    placement: Some((tile, position)),
                    submit: false,
                };
            }
        }
    }

    let chosen = match (unplaced.as_slice(), candidates.as_slice()) {
        ([only], _) => Some(*only),
        ([], [only]) => Some(*only),
        _ => None,
    };
    match chosen {
        Some(tile) => MatcherMove {
            utterance: format!("Got it, I placed that basket in position {position}."),
            target_position: position,
            best_guess: Some(tile),
            confusions: Vec::new(),
            distinctive,
            placement: Some((tile, position)),
            submit: false,
        },
        None => {
            let pool = if unplaced.is_empty() { &candidates } else { &unplaced };
            MatcherMove {
                best_guess: pool.first().copied(),
                confusions: pool.iter().skip(1).copied().collect(),
                distinctive,
                ..view.say(
                    format!("I'm not sure between a few baskets. Can you clarify basket {position}?"),
                    position,
                )
            }
        }
    }
}
