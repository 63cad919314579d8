use std::cell::RefCell;
use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmError, LlmProvider, LlmRequest, ProviderReply, TokenUsage};

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct OpenAiProvider {
    base_url: String,
    api_key: Option<String>,
    timeout: Duration,
}

thread_local! {
    // One connection pool per worker thread.
    static AGENTS: RefCell<Vec<(Duration, ureq::Agent)>> = const { RefCell::new(Vec::new()) };
}

impl OpenAiProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        OpenAiProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the bearer token from the environment variable `var`.
    pub fn from_env(base_url: impl Into<String>, var: &str) -> Result<Self, LlmError> {
        let key = std::env::var(var)
            .map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?;
        Ok(OpenAiProvider::new(base_url, Some(key)))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn agent(&self) -> ureq::Agent {
        AGENTS.with(|a| {
            let mut agents = a.borrow_mut();
            if let Some((_, agent)) = agents.iter().find(|(t, _)| *t == self.timeout) {
                return agent.clone();
            }
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(self.timeout))
                .http_status_as_error(false)
                .build()
                .into();
            agents.push((self.timeout, agent.clone()));
            agent
        })
    }
}

pub(crate) fn request_body(req: &LlmRequest) -> Value {
    let mut messages = Vec::new();
    if !req.system_prompt.is_empty() {
        messages.push(json!({"role": "system", "content": req.system_prompt}));
    }
    messages.push(json!({"role": "user", "content": req.user_prompt}));
    json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
    })
}

pub(crate) fn parse_reply(body: &Value) -> Result<ProviderReply, LlmError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Transport(format!("unexpected response shape: {body}")))?;
    let usage = body.get("usage").and_then(|u| {
        Some(TokenUsage::new(
            u.get("prompt_tokens")?.as_u64()?,
            u.get("completion_tokens")?.as_u64()?,
        ))
    });
    Ok(ProviderReply {
        text: text.to_string(),
        usage,
        latency: None,
    })
}

impl LlmProvider for OpenAiProvider {
    fn complete(&self, req: &LlmRequest) -> Result<ProviderReply, LlmError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut call = self.agent().post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(request_body(req))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Http { status, body: text });
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("invalid JSON body: {e}")))?;
        parse_reply(&body)
    }
}
