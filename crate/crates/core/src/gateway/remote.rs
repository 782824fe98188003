//! Remote chat-completion backend over the common HTTP convention.
//!
//! Sends `{model, messages, temperature, top_p, max_tokens}` to the
//! configured endpoint and reads `choices[0].message.content`. The API key
//! comes from an environment variable named in the config.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendKind, CompletionBackend, CompletionRequest, GatewayError};

/// Remote provider settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    /// Model id sent when the request leaves `model_id` empty.
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Nucleus sampling parameter; provider default when unset.
    #[serde(default)]
    pub top_p: Option<f64>,
    /// Completion length cap; provider default when unset.
    #[serde(default)]
    pub max_tokens: Option<u32>,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
        }
    }
}

impl CompletionBackend for RemoteBackend {
    fn invoke(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let model = if req.model_id.is_empty() {
            self.config.model.clone()
        } else {
            req.model_id.clone()
        };
        let mut messages = Vec::new();
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": req.user_prompt}));
        let mut body = json!({
            "model": model,
            "messages": messages,
            "temperature": req.temperature,
        });
        if let Some(top_p) = self.config.top_p {
            body["top_p"] = json!(top_p);
        }
        if let Some(max_tokens) = self.config.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        // Providers that ignore seeds simply drop the field.
        body["seed"] = json!(req.seed.wrapping_add(req.sample_index as u64));

        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response =
            request
                .send_json(&body)
                .map_err(|e| GatewayError::BackendUnavailable {
                    attempts: 1,
                    last_error: e.to_string(),
                })?;
        let payload: serde_json::Value =
            response
                .body_mut()
                .read_json()
                .map_err(|e| GatewayError::BackendUnavailable {
                    attempts: 1,
                    last_error: format!("bad response body: {e}"),
                })?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BackendUnavailable {
                attempts: 1,
                last_error: "response missing choices[0].message.content".into(),
            })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }
}
