use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Director,
    Matcher,
}

impl Role {
    pub fn partner(self) -> Role {
        match self {
            Role::Director => Role::Matcher,
            Role::Matcher => Role::Director,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Director => "director",
            Role::Matcher => "matcher",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticipantKind {
    Human,
    Llm,
    Scripted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    None,
    Low,
    Medium,
    High,
}

impl ReasoningEffort {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningEffort::None => "none",
            ReasoningEffort::Low => "low",
            ReasoningEffort::Medium => "medium",
            ReasoningEffort::High => "high",
        }
    }
}

/// Behaviour profile of a scripted agent.
///
/// * `Perfect` always describes with the full feature set and always places correctly.
/// * `Noisy(p)`: a director gives an incomplete first description with probability `p`;
///   a matcher places a wrong tile with probability `p`.
/// * `Terse`: a director uses the shortest description that singles the basket out
///   among the targets from round 2 on (a matcher behaves like `Perfect`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "profile", content = "p")]
pub enum ScriptedBehavior {
    #[default]
    Perfect,
    Noisy(f64),
    Terse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSpec {
    pub kind: ParticipantKind,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<ReasoningEffort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<ScriptedBehavior>,
}

impl ParticipantSpec {
    pub fn human(role: Role) -> Self {
        ParticipantSpec {
            kind: ParticipantKind::Human,
            role,
            model_id: None,
            reasoning_effort: None,
            behavior: None,
        }
    }

    pub fn scripted(role: Role, behavior: ScriptedBehavior) -> Self {
        ParticipantSpec {
            kind: ParticipantKind::Scripted,
            role,
            model_id: None,
            reasoning_effort: None,
            behavior: Some(behavior),
        }
    }

    pub fn llm(role: Role, model_id: impl Into<String>, effort: ReasoningEffort) -> Self {
        ParticipantSpec {
            kind: ParticipantKind::Llm,
            role,
            model_id: Some(model_id.into()),
            reasoning_effort: Some(effort),
            behavior: None,
        }
    }

    pub fn is_agent(&self) -> bool {
        self.kind != ParticipantKind::Human
    }

    pub fn behavior(&self) -> ScriptedBehavior {
        self.behavior.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.kind, &self.model_id) {
            (ParticipantKind::Llm, None) => return Err("llm participant needs a model_id".into()),
            (ParticipantKind::Llm, Some(m)) if m.trim().is_empty() => {
                return Err("llm participant needs a model_id".into())
            }
            (ParticipantKind::Human | ParticipantKind::Scripted, Some(_)) => {
                return Err("model_id is only allowed for llm participants".into())
            }
            _ => {}
        }
        if let Some(ScriptedBehavior::Noisy(p)) = self.behavior {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("noise probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}
