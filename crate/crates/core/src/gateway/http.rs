use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendKind, CallError, CompletionBackend};
use crate::prompting::Prompt;

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Builds the JSON body for one prompt: an optional system message followed
/// by a single user message.
pub fn request_body(cfg: &BackendConfig, prompt_text: &str) -> serde_json::Value {
    let mut messages = Vec::new();
    if let Some(system) = &cfg.system_message {
        messages.push(ChatMessage { role: "system", content: system });
    }
    messages.push(ChatMessage { role: "user", content: prompt_text });
    serde_json::to_value(ChatRequest {
        model: &cfg.model_name,
        messages,
        temperature: cfg.temperature,
    })
    .expect("request serializes")
}

/// Pulls the first choice's message content out of a response body.
pub fn extract_content(body: &str) -> Result<String, CallError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| CallError::Malformed(format!("bad response JSON: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| CallError::Malformed("response has no message content".into()))
}

/// Chat-completion client over HTTP with bearer-token authentication.
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    cfg: BackendConfig,
    api_key: String,
}

impl HttpChatBackend {
    pub fn new(cfg: BackendConfig, api_key: String) -> Result<Self, CallError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_seconds))
            .build()
            .map_err(|e| CallError::Connection(e.to_string()))?;
        Ok(HttpChatBackend { client, cfg, api_key })
    }
}

impl CompletionBackend for HttpChatBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::HttpChat
    }

    fn send(&self, prompt: &Prompt) -> Result<String, CallError> {
        let response = self
            .client
            .post(&self.cfg.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&request_body(&self.cfg, &prompt.full_text))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    CallError::Timeout
                } else {
                    CallError::Connection(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Connection(e.to_string())
            }
        })?;
        match status {
            200..=299 => extract_content(&body),
            401 | 403 => Err(CallError::Auth { status, body }),
            429 => Err(CallError::RateLimited { status }),
            408 => Err(CallError::Timeout),
            500..=599 => Err(CallError::Server { status }),
            _ => Err(CallError::Rejected { status, body }),
        }
    }
}
