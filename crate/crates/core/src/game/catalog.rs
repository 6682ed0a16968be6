use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GameError;

/// Number of target baskets per round.
pub const N_TARGETS: usize = 12;

/// Distractors shown only to the matcher (18 candidate tiles in total).
pub const DEFAULT_DISTRACTORS: usize = 6;

/// Opaque basket identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasketId(pub String);

impl BasketId {
    pub fn new(id: impl Into<String>) -> Self {
        BasketId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BasketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One basket stimulus. `features` are symbolic stand-ins for what the image shows;
/// only scripted agents and the mock provider look at them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasketEntry {
    pub id: BasketId,
    pub image_ref: String,
    pub features: BTreeSet<String>,
}

impl BasketEntry {
    pub fn new<I, S>(id: &str, image_ref: &str, features: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        BasketEntry {
            id: BasketId::new(id),
            image_ref: image_ref.to_string(),
            features: features.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog")]
pub struct BasketCatalog {
    targets: Vec<BasketEntry>,
    distractors: Vec<BasketEntry>,
}

#[derive(Deserialize)]
struct RawCatalog {
    targets: Vec<BasketEntry>,
    distractors: Vec<BasketEntry>,
}

impl TryFrom<RawCatalog> for BasketCatalog {
    type Error = GameError;

    fn try_from(raw: RawCatalog) -> Result<Self, GameError> {
        let n = raw.distractors.len();
        BasketCatalog::with_distractor_count(raw.targets, raw.distractors, n)
    }
}

impl BasketCatalog {
    /// Catalog with exactly 12 targets and 6 distractors.
    pub fn new(
        targets: Vec<BasketEntry>,
        distractors: Vec<BasketEntry>,
    ) -> Result<Self, GameError> {
        Self::with_distractor_count(targets, distractors, DEFAULT_DISTRACTORS)
    }

    /// Catalog with a non-default distractor count (e.g. 4 for a 16-tile pool).
    pub fn with_distractor_count(
        targets: Vec<BasketEntry>,
        distractors: Vec<BasketEntry>,
        n_distractors: usize,
    ) -> Result<Self, GameError> {
        if targets.len() != N_TARGETS {
            return Err(GameError::InvalidCatalog(format!(
                "expected {N_TARGETS} targets, got {}",
                targets.len()
            )));
        }
        if n_distractors == 0 || distractors.len() != n_distractors {
            return Err(GameError::InvalidCatalog(format!(
                "expected {n_distractors} distractors, got {}",
                distractors.len()
            )));
        }
        let mut seen = HashSet::new();
        for entry in targets.iter().chain(&distractors) {
            if entry.id.0.is_empty() {
                return Err(GameError::InvalidCatalog("empty basket id".into()));
            }
            if entry.image_ref.is_empty() {
                return Err(GameError::InvalidCatalog(format!(
                    "basket {} has no image reference",
                    entry.id
                )));
            }
            if !seen.insert(entry.id.clone()) {
                return Err(GameError::DuplicateId(entry.id.0.clone()));
            }
        }
        Ok(BasketCatalog {
            targets,
            distractors,
        })
    }

    pub fn targets(&self) -> &[BasketEntry] {
        &self.targets
    }

    pub fn distractors(&self) -> &[BasketEntry] {
        &self.distractors
    }

    /// Number of candidate tiles the matcher sees.
    pub fn pool_size(&self) -> usize {
        self.targets.len() + self.distractors.len()
    }

    pub fn all(&self) -> impl Iterator<Item = &BasketEntry> {
        self.targets.iter().chain(&self.distractors)
    }

    pub fn get(&self, id: &BasketId) -> Option<&BasketEntry> {
        self.all().find(|e| &e.id == id)
    }

    pub fn is_target(&self, id: &BasketId) -> bool {
        self.targets.iter().any(|e| &e.id == id)
    }

    /// Scripted agents describe baskets by feature tags, so every entry needs a
    /// non-empty feature set and no set may be contained in another one.
    pub fn check_scripted_features(&self) -> Result<(), GameError> {
        let entries: Vec<&BasketEntry> = self.all().collect();
        for e in &entries {
            if e.features.is_empty() {
                return Err(GameError::InvalidCatalog(format!(
                    "basket {} has no feature tags",
                    e.id
                )));
            }
            if e.features.iter().any(|f| f.contains(',') || f.trim().is_empty()) {
                return Err(GameError::InvalidCatalog(format!(
                    "basket {} has a malformed feature tag",
                    e.id
                )));
            }
        }
        for (i, a) in entries.iter().enumerate() {
            for b in entries.iter().skip(i + 1) {
                if a.features.is_subset(&b.features) || b.features.is_subset(&a.features) {
                    return Err(GameError::InvalidCatalog(format!(
                        "feature tags of {} and {} are not mutually distinguishable",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// The stock 18-basket catalog used by the simulator and tests.
    pub fn builtin() -> Self {
        const ROWS: [(&str, [&str; 4]); 18] = [
            ("t01", ["round", "wicker", "loop handles", "light tan"]),
            ("t02", ["oval", "rattan", "single arch handle", "dark brown"]),
            ("t03", ["rectangular", "seagrass", "rope handles", "gray"]),
            ("t04", ["tall cylinder", "willow", "no handles", "reddish"]),
            ("t05", ["shallow tray", "bamboo", "side grips", "natural"]),
            ("t06", ["half moon", "straw", "lid handle", "two tone"]),
            ("t07", ["round", "rattan", "rope handles", "natural"]),
            ("t08", ["oval", "wicker", "no handles", "gray"]),
            ("t09", ["rectangular", "willow", "loop handles", "two tone"]),
            ("t10", ["tall cylinder", "straw", "single arch handle", "light tan"]),
            ("t11", ["shallow tray", "seagrass", "lid handle", "dark brown"]),
            ("t12", ["half moon", "bamboo", "side grips", "reddish"]),
            ("d01", ["round", "wicker", "loop handles", "dark brown"]),
            ("d02", ["oval", "rattan", "single arch handle", "natural"]),
            ("d03", ["tall cylinder", "willow", "no handles", "gray"]),
            ("d04", ["shallow tray", "bamboo", "rope handles", "natural"]),
            ("d05", ["rectangular", "seagrass", "rope handles", "light tan"]),
            ("d06", ["half moon", "straw", "side grips", "two tone"]),
        ];
        let entries: Vec<BasketEntry> = ROWS
            .iter()
            .map(|(id, feats)| BasketEntry::new(id, &format!("baskets/{id}.png"), *feats))
            .collect();
        let (targets, distractors) = entries.split_at(N_TARGETS);
        BasketCatalog::new(targets.to_vec(), distractors.to_vec()).expect("builtin catalog is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_valid_for_scripted_play() {
        let c = BasketCatalog::builtin();
        assert_eq!(c.targets().len(), 12);
        assert_eq!(c.distractors().len(), 6);
        assert_eq!(c.pool_size(), 18);
        c.check_scripted_features().unwrap();
    }

    #[test]
    fn eleven_targets_rejected() {
        let c = BasketCatalog::builtin();
        let err = BasketCatalog::new(c.targets()[..11].to_vec(), c.distractors().to_vec());
        assert!(matches!(err, Err(GameError::InvalidCatalog(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let c = BasketCatalog::builtin();
        let mut distractors = c.distractors().to_vec();
        distractors[0].id = BasketId::new("t03");
        let err = BasketCatalog::new(c.targets().to_vec(), distractors);
        assert!(matches!(err, Err(GameError::DuplicateId(id)) if id == "t03"));
    }

    #[test]
    fn sixteen_tile_variant() {
        let c = BasketCatalog::builtin();
        let four = c.distractors()[..4].to_vec();
        assert!(BasketCatalog::new(c.targets().to_vec(), four.clone()).is_err());
        let c16 = BasketCatalog::with_distractor_count(c.targets().to_vec(), four, 4).unwrap();
        assert_eq!(c16.pool_size(), 16);
    }

    #[test]
    fn nested_feature_sets_rejected() {
        let c = BasketCatalog::builtin();
        let mut targets = c.targets().to_vec();
        targets[1].features = ["round", "wicker"].iter().map(|s| s.to_string()).collect();
        let cat = BasketCatalog::new(targets, c.distractors().to_vec()).unwrap();
        assert!(cat.check_scripted_features().is_err());
    }

    #[test]
    fn deserialization_validates() {
        let c = BasketCatalog::builtin();
        let mut v = serde_json::to_value(&c).unwrap();
        v["targets"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<BasketCatalog>(v).is_err());
        let back: BasketCatalog =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
