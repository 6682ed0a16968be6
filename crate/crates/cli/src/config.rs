//! Sweep configuration files.
//!
//! ```toml
//! pairs = 2
//! seed = 7
//! turn_cap = 120
//!
//! [[providers]]
//! name = "openai"
//! base_url = "https://api.openai.com/v1"
//! api_key_env = "OPENAI_API_KEY"
//! models = ["gpt-*"]
//!
//! [[conditions]]
//! label = "default"
//! director = { kind = "llm", model_id = "gpt-5.2", reasoning_effort = "none" }
//! matcher = { kind = "llm", model_id = "gpt-5.2", reasoning_effort = "none" }
//!
//! [[conditions]]
//! label = "oracle"
//! director = { kind = "scripted", behavior = { profile = "perfect" } }
//! matcher = { kind = "scripted", behavior = { profile = "noisy", p = 0.1 } }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use refgame_core::game::{BasketCatalog, Condition, PromptVariant, SessionConfig};
use refgame_core::participants::{
    ParticipantKind, ParticipantSpec, ReasoningEffort, Role, ScriptedBehavior, DEFAULT_MAX_ATTEMPTS,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_PROVIDER_TIMEOUT_S: u64 = 120;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Sessions per condition.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Pair `i` of every condition plays with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rounds: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_cap: Option<u32>,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// JSON basket catalog; the built-in one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub conditions: Vec<ConditionConfig>,
}

fn default_pairs() -> usize {
    1
}

fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub label: String,
    #[serde(default)]
    pub prompt_variant: PromptVariant,
    pub director: RoleConfig,
    pub matcher: RoleConfig,
}

/// A participant without its role, which follows from the table it sits in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleConfig {
    pub kind: ParticipantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<ReasoningEffort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<ScriptedBehavior>,
}

impl RoleConfig {
    pub fn scripted(behavior: ScriptedBehavior) -> Self {
        RoleConfig {
            kind: ParticipantKind::Scripted,
            model_id: None,
            reasoning_effort: None,
            behavior: Some(behavior),
        }
    }

    pub fn llm(model_id: &str, effort: ReasoningEffort) -> Self {
        RoleConfig {
            kind: ParticipantKind::Llm,
            model_id: Some(model_id.to_string()),
            reasoning_effort: Some(effort),
            behavior: None,
        }
    }

    pub fn spec(&self, role: Role) -> ParticipantSpec {
        ParticipantSpec {
            kind: self.kind,
            role,
            model_id: self.model_id.clone(),
            reasoning_effort: self.reasoning_effort,
            behavior: self.behavior,
        }
    }
}

/// An OpenAI-compatible chat-completions endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub name: String,
    pub base_url: String,
    /// Environment variable holding the API key; requests go unauthenticated if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Model ids served here; a trailing `*` matches a prefix. Empty matches everything.
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// Directory the request image refs resolve against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets_dir: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    DEFAULT_PROVIDER_TIMEOUT_S
}

/// One session to simulate.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedSession {
    pub pair_id: String,
    pub config: SessionConfig,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = config.catalog.as_mut() {
            rebase(p);
        }
        for provider in &mut config.providers {
            if let Some(p) = provider.assets_dir.as_mut() {
                rebase(p);
            }
        }
        Ok(config)
    }

    /// A single-condition sweep of two scripted agents.
    pub fn scripted(label: &str, pairs: usize, seed: u64, behavior: ScriptedBehavior) -> Self {
        SweepConfig {
            pairs,
            seed,
            jobs: None,
            out: None,
            n_rounds: None,
            turn_cap: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            catalog: None,
            providers: Vec::new(),
            conditions: vec![ConditionConfig {
                label: label.to_string(),
                prompt_variant: PromptVariant::Full,
                director: RoleConfig::scripted(behavior),
                matcher: RoleConfig::scripted(behavior),
            }],
        }
    }

    pub fn catalog(&self) -> Result<BasketCatalog, CliError> {
        let Some(path) = &self.catalog else {
            return Ok(BasketCatalog::builtin());
        };
        let raw = std::fs::read(path)
            .map_err(|e| CliError::Usage(format!("cannot read catalog {}: {e}", path.display())))?;
        serde_json::from_slice(&raw).map_err(|e| CliError::Usage(format!("invalid catalog {}: {e}", path.display())))
    }

    pub fn uses_llm(&self) -> bool {
        self.conditions
            .iter()
            .any(|c| c.director.kind == ParticipantKind::Llm || c.matcher.kind == ParticipantKind::Llm)
    }

    /// Every session of the sweep, conditions in file order, pairs numbered from 1.
    pub fn plan(&self) -> Result<Vec<PlannedSession>, CliError> {
        if self.conditions.is_empty() {
            return Err(CliError::Usage("config defines no [[conditions]]".into()));
        }
        if self.pairs == 0 {
            return Err(CliError::Usage("pairs must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(CliError::Usage("max_attempts must be at least 1".into()));
        }
        let catalog = self.catalog()?;
        let mut labels = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.conditions {
            let valid_label = !c.label.is_empty()
                && c.label.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch));
            if !valid_label {
                return Err(CliError::Usage(format!(
                    "condition label {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                    c.label
                )));
            }
            if !labels.insert(c.label.as_str()) {
                return Err(CliError::Usage(format!("duplicate condition label {:?}", c.label)));
            }
            for (role, rc) in [(Role::Director, &c.director), (Role::Matcher, &c.matcher)] {
                if rc.kind == ParticipantKind::Human {
                    return Err(CliError::Usage(format!(
                        "condition {:?}: {role} is human; simulations run agents only, use `serve` for human sessions",
                        c.label
                    )));
                }
            }
            for i in 1..=self.pairs {
                let mut config = SessionConfig::new(
                    Condition::AA,
                    self.seed.wrapping_add(i as u64 - 1),
                    catalog.clone(),
                    c.director.spec(Role::Director),
                    c.matcher.spec(Role::Matcher),
                );
                config.n_distractors = config.catalog.distractors().len();
                if let Some(n) = self.n_rounds {
                    config.n_rounds = n;
                }
                if let Some(cap) = self.turn_cap {
                    config.turn_cap = cap;
                }
                config.prompt_variant = c.prompt_variant;
                config.label = Some(c.label.clone());
                config
                    .validate()
                    .map_err(|e| CliError::Usage(format!("condition {:?}: {e}", c.label)))?;
                out.push(PlannedSession {
                    pair_id: format!("{}-{i:03}", c.label),
                    config,
                });
            }
        }
        Ok(out)
    }
}
