//! Completion providers backed by OpenAI-compatible chat-completions endpoints.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use refgame_core::participants::{CompletionProvider, CompletionRequest, MessageRole, ProviderError, ProviderMessage};
use serde_json::{json, Value};

use crate::config::ProviderConfig;
use crate::error::CliError;

pub struct HttpProvider {
    name: String,
    endpoint: String,
    api_key: Option<String>,
    assets_dir: Option<PathBuf>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, CliError> {
        let api_key = match &config.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Some(key),
                _ => return Err(CliError::Usage(format!("provider {}: environment variable {var} is not set", config.name))),
            },
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| CliError::Usage(format!("provider {}: {e}", config.name)))?;
        Ok(HttpProvider {
            name: config.name.clone(),
            endpoint: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key,
            assets_dir: config.assets_dir.clone(),
            client,
        })
    }

    fn image_url(&self, image_ref: &str) -> Result<String, ProviderError> {
        if image_ref.starts_with("http://") || image_ref.starts_with("https://") || image_ref.starts_with("data:") {
            return Ok(image_ref.to_string());
        }
        let dir = self
            .assets_dir
            .as_ref()
            .ok_or_else(|| ProviderError::Transport(format!("{}: no assets_dir to resolve {image_ref}", self.name)))?;
        let path = dir.join(image_ref);
        let bytes = std::fs::read(&path)
            .map_err(|e| ProviderError::Transport(format!("cannot read image {}: {e}", path.display())))?;
        let mime = match path.extension().and_then(|e| e.to_str()) {
            Some("jpg" | "jpeg") => "image/jpeg",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/png",
        };
        Ok(format!(
            "data:{mime};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(bytes)
        ))
    }

    fn message(&self, m: &ProviderMessage) -> Result<Value, ProviderError> {
        let role = match m.role {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        };
        let content = match &m.image_ref {
            None => json!(m.content),
            Some(r) => json!([
                { "type": "text", "text": m.content },
                { "type": "image_url", "image_url": { "url": self.image_url(r)? } },
            ]),
        };
        Ok(json!({ "role": role, "content": content }))
    }

    /// The request body sent for `request`.
    pub fn body(&self, request: &CompletionRequest) -> Result<Value, ProviderError> {
        let messages = request
            .messages
            .iter()
            .map(|m| self.message(m))
            .collect::<Result<Vec<_>, _>>()?;
        let mut body = json!({ "model": request.model_id, "messages": messages });
        if let Some(effort) = request.reasoning_effort {
            body["reasoning_effort"] = json!(effort.as_str());
        }
        Ok(body)
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = self.body(request)?;
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(format!("{}: {e}", self.name))
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let snippet: String = text.chars().take(300).collect();
            return Err(ProviderError::Transport(format!("{}: HTTP {status}: {snippet}", self.name)));
        }
        let value: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(format!("{}: unreadable response: {e}", self.name))
            }
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Transport(format!("{}: response has no message content", self.name)))
    }
}

/// Sends each request to the first provider whose model patterns match.
#[derive(Default)]
pub struct RoutingProvider {
    routes: Vec<(Vec<String>, Arc<dyn CompletionProvider>)>,
}

fn matches(pattern: &str, model_id: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => model_id.starts_with(prefix),
        None => pattern == model_id,
    }
}

impl RoutingProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(mut self, models: Vec<String>, provider: Arc<dyn CompletionProvider>) -> Self {
        self.routes.push((models, provider));
        self
    }

    pub fn from_configs(configs: &[ProviderConfig]) -> Result<Self, CliError> {
        let mut routing = RoutingProvider::new();
        for c in configs {
            routing = routing.route(c.models.clone(), Arc::new(HttpProvider::new(c)?));
        }
        Ok(routing)
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    fn lookup(&self, model_id: &str) -> Option<&Arc<dyn CompletionProvider>> {
        self.routes
            .iter()
            .find(|(models, _)| models.is_empty() || models.iter().any(|p| matches(p, model_id)))
            .map(|(_, p)| p)
    }

    pub fn serves(&self, model_id: &str) -> bool {
        self.lookup(model_id).is_some()
    }
}

impl CompletionProvider for RoutingProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.lookup(&request.model_id)
            .ok_or_else(|| ProviderError::Transport(format!("no provider serves model {}", request.model_id)))?
            .complete(request)
    }
}
