//! Chat-completion backend over HTTP.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{estimate_tokens, PlannerBackend, PlannerError, PlannerReply, PlannerRequest, TokenUsage};

pub const API_KEY_VAR: &str = "DAGCREW_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub context_tokens: u32,
    pub timeout_secs: u64,
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            context_tokens: 128_000,
            timeout_secs: 120,
            attempts: 3,
            backoff_ms: 1000,
        }
    }
}

pub struct HttpPlanner {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpPlanner {
    /// Reads the API key from `DAGCREW_API_KEY` when set.
    pub fn new(config: HttpConfig) -> Self {
        let key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, api_key, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt(&self, request: &PlannerRequest) -> Result<PlannerReply, PlannerError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let budget = request.budget.min(self.config.max_output_tokens);
        let body = json!({
            "model": self.config.model,
            "messages": request.render(),
            "temperature": self.config.temperature,
            "max_tokens": budget,
        });
        let mut call = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send(body.to_string()).map_err(|e| PlannerError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| PlannerError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if status == 429 || status >= 500 {
            return Err(PlannerError::Transport {
                message: format!("HTTP {status}"),
                retryable: true,
            });
        }
        if !(200..300).contains(&status) {
            return Err(PlannerError::Transport {
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
                retryable: false,
            });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| PlannerError::Response(e.to_string()))?;
        let choice = &v["choices"][0];
        let content = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| PlannerError::Response("no message content in first choice".into()))?
            .to_string();
        let usage = match (
            v["usage"]["prompt_tokens"].as_u64(),
            v["usage"]["completion_tokens"].as_u64(),
        ) {
            (Some(p), Some(c)) => TokenUsage {
                prompt_tokens: p,
                completion_tokens: c,
            },
            _ => TokenUsage {
                prompt_tokens: request.render().iter().map(|m| estimate_tokens(&m.content)).sum(),
                completion_tokens: estimate_tokens(&content),
            },
        };
        if choice["finish_reason"] == "length" {
            return Err(PlannerError::Truncated {
                partial: content,
                usage,
            });
        }
        Ok(PlannerReply { text: content, usage })
    }
}

impl PlannerBackend for HttpPlanner {
    fn complete(&self, request: &PlannerRequest) -> Result<PlannerReply, PlannerError> {
        let attempts = self.config.attempts.max(1);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = None;
        for i in 0..attempts {
            match self.attempt(request) {
                Err(e) if e.is_retryable() => {
                    last = Some(e);
                    if i + 1 < attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn is_live(&self) -> bool {
        true
    }
}
