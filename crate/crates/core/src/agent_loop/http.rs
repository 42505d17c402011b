//! OpenAI-compatible chat-completion driver.
//!
//! Structured `tool_calls` in a response are folded back into the action
//! text as `<tool_call>` blocks so one parser handles every driver.
//! Observation messages are sent with the `user` role.

use std::time::Duration;

use serde_json::{json, Value};

use super::action::{CALL_CLOSE, CALL_OPEN};
use super::driver::{ChatMessage, DriverError, DriverKind, DriverReply, ModelDriver, Role, Usage};
use super::prompt::tool_definitions;

pub const ENV_ENDPOINT: &str = "LOCFUSE_ENDPOINT";
pub const ENV_MODEL: &str = "LOCFUSE_MODEL";
pub const ENV_API_KEY: &str = "LOCFUSE_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
}

impl HttpChatConfig {
    pub fn from_env() -> Result<Self, DriverError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| DriverError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| DriverError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(Self {
            endpoint,
            model,
            api_key: std::env::var(ENV_API_KEY).ok(),
            temperature: 0.0,
            timeout: Duration::from_secs(300),
        })
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

pub struct HttpChatDriver {
    cfg: HttpChatConfig,
    client: reqwest::blocking::Client,
}

impl HttpChatDriver {
    pub fn new(cfg: HttpChatConfig) -> Result<Self, DriverError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| DriverError::Config(e.to_string()))?;
        Ok(Self { cfg, client })
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        let messages: Vec<Value> = messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User | Role::Tool => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        json!({
            "model": self.cfg.model,
            "messages": messages,
            "tools": tool_definitions(),
            "temperature": self.cfg.temperature,
        })
    }
}

/// Extracts the action text and usage from a chat-completion response body.
pub fn parse_completion(body: &Value) -> Result<DriverReply, DriverError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| DriverError::Protocol("response has no choices[0].message".into()))?;
    let mut text = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let f = call.get("function").unwrap_or(call);
            let name = f.get("name").cloned().unwrap_or(Value::Null);
            let arguments = match f.get("arguments") {
                Some(Value::String(s)) => serde_json::from_str(s).unwrap_or(Value::String(s.clone())),
                Some(v) => v.clone(),
                None => json!({}),
            };
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&format!("{CALL_OPEN}{}{CALL_CLOSE}", json!({"name": name, "arguments": arguments})));
        }
    }
    let usage = body.get("usage").and_then(|u| {
        let prompt = u.get("prompt_tokens")?.as_u64()?;
        let completion = u.get("completion_tokens")?.as_u64()?;
        Some(Usage { prompt_tokens: prompt, completion_tokens: completion })
    });
    Ok(DriverReply { text, usage })
}

impl ModelDriver for HttpChatDriver {
    fn kind(&self) -> DriverKind {
        DriverKind::HttpChat
    }

    fn complete(&mut self, messages: &[ChatMessage]) -> Result<DriverReply, DriverError> {
        let mut req = self.client.post(self.cfg.url()).json(&self.request_body(messages));
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| DriverError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(DriverError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(DriverError::Protocol(format!("HTTP {status}: {detail}")));
        }
        let body: Value = resp.json().map_err(|e| DriverError::Protocol(e.to_string()))?;
        parse_completion(&body)
    }
}
