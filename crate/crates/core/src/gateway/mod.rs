//! Completion gateway: one contract over a live chat-completion endpoint and
//! an offline mock, with a persistent cache, retries and bounded
//! parallelism.

mod cache;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, CompletionCache};
pub use http::{extract_content, request_body, HttpChatBackend};
pub use mock::{MockBackend, MockConfig, MockRule};

use crate::prompting::Prompt;

pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http_chat" => Ok(BackendKind::HttpChat),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend `{other}` (expected http_chat or mock)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub backend_kind: BackendKind,
    pub model_name: String,
    pub temperature: f64,
    pub endpoint_url: String,
    pub timeout_seconds: f64,
    pub max_retries: u32,
    pub retry_backoff_base_seconds: f64,
    pub max_parallel_requests: usize,
    pub system_message: Option<String>,
    pub mock: MockConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            backend_kind: BackendKind::Mock,
            model_name: "gpt-3.5-turbo-1106".into(),
            temperature: 0.0,
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            timeout_seconds: 60.0,
            max_retries: 5,
            retry_backoff_base_seconds: 1.0,
            max_parallel_requests: 4,
            system_message: None,
            mock: MockConfig::default(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidConfig(m.to_string()));
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_parallel_requests < 1 {
            return bad("max_parallel_requests must be >= 1");
        }
        if !(self.timeout_seconds > 0.0) {
            return bad("timeout_seconds must be > 0");
        }
        if !(self.retry_backoff_base_seconds >= 0.0) {
            return bad("retry_backoff_base_seconds must be >= 0");
        }
        Ok(())
    }

    pub fn cache_key(&self, prompt_text: &str) -> CacheKey {
        CacheKey::new(&self.model_name, self.temperature, prompt_text)
    }
}

/// Outcome of a single backend call.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("rate limited (HTTP {status})")]
    RateLimited { status: u16 },
    #[error("server error (HTTP {status})")]
    Server { status: u16 },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Forced(String),
}

impl CallError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            CallError::RateLimited { .. } | CallError::Server { .. } | CallError::Timeout | CallError::Connection(_)
        )
    }

    fn status(&self) -> Option<u16> {
        match self {
            CallError::RateLimited { status }
            | CallError::Server { status }
            | CallError::Auth { status, .. }
            | CallError::Rejected { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("environment variable {0} is not set; it must hold the API credential")]
    MissingCredential(&'static str),
    #[error("backend gave up after {attempts} attempts (last status {last_status:?}): {last_error}")]
    BackendExhausted {
        last_status: Option<u16>,
        attempts: u32,
        last_error: CallError,
    },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("backend call failed: {0}")]
    Call(CallError),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("completion cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

/// Something that turns a prompt into reply text, once.
pub trait CompletionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn send(&self, prompt: &Prompt) -> Result<String, CallError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCompletion {
    pub situation_id: String,
    pub text: String,
    pub backend_kind: BackendKind,
    pub cache_hit: bool,
    pub latency_ms: u64,
    /// Backend calls made; zero on a cache hit.
    pub attempt_count: u32,
}

/// A failed item of a batch, left in place of its completion.
#[derive(Debug, thiserror::Error)]
#[error("situation {situation_id}: {error}")]
pub struct BatchError {
    pub situation_id: String,
    #[source]
    pub error: GatewayError,
}

pub struct Gateway {
    cfg: BackendConfig,
    cache: CompletionCache,
    backend: Box<dyn CompletionBackend>,
    network_attempts: AtomicUsize,
}

impl Gateway {
    /// Builds the backend named in `cfg`. The live backend reads its
    /// credential from [`API_KEY_ENV`].
    pub fn new(cfg: BackendConfig, cache: CompletionCache) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend: Box<dyn CompletionBackend> = match cfg.backend_kind {
            BackendKind::Mock => Box::new(MockBackend::new(cfg.mock.clone())),
            BackendKind::HttpChat => {
                let key = std::env::var(API_KEY_ENV)
                    .ok()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or(GatewayError::MissingCredential(API_KEY_ENV))?;
                Box::new(HttpChatBackend::new(cfg.clone(), key).map_err(GatewayError::Call)?)
            }
        };
        Ok(Self::with_backend(cfg, cache, backend))
    }

    pub fn with_backend(cfg: BackendConfig, cache: CompletionCache, backend: Box<dyn CompletionBackend>) -> Self {
        Gateway {
            cfg,
            cache,
            backend,
            network_attempts: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    /// Backend calls issued so far, cache hits excluded.
    pub fn network_attempts(&self) -> usize {
        self.network_attempts.load(Ordering::SeqCst)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.cfg.retry_backoff_base_seconds * 2f64.powi(attempt.saturating_sub(1) as i32);
        let jitter = rand::thread_rng().gen_range(0.5..1.0);
        Duration::from_secs_f64((base * jitter).min(300.0))
    }

    pub fn complete(&self, prompt: &Prompt) -> Result<ModelCompletion, GatewayError> {
        let started = Instant::now();
        let key = self.cfg.cache_key(&prompt.full_text);
        if let Some(text) = self.cache.get(&key)? {
            return Ok(ModelCompletion {
                situation_id: prompt.situation_id.clone(),
                text,
                backend_kind: self.backend.kind(),
                cache_hit: true,
                latency_ms: started.elapsed().as_millis() as u64,
                attempt_count: 0,
            });
        }

        let max_attempts = self.cfg.max_retries + 1;
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            self.network_attempts.fetch_add(1, Ordering::SeqCst);
            match self.backend.send(prompt) {
                Ok(text) if text.trim().is_empty() => return Err(GatewayError::EmptyCompletion),
                Ok(text) => break text,
                Err(e) if e.is_transient() && attempt < max_attempts => {
                    tracing::warn!(situation = %prompt.situation_id, attempt, error = %e, "retrying completion");
                    std::thread::sleep(self.backoff(attempt));
                }
                Err(CallError::Timeout) => return Err(GatewayError::Timeout { attempts: attempt }),
                Err(e) if e.is_transient() => {
                    return Err(GatewayError::BackendExhausted {
                        last_status: e.status(),
                        attempts: attempt,
                        last_error: e,
                    })
                }
                Err(e) => return Err(GatewayError::Call(e)),
            }
        };

        self.cache.put(&key, &text)?;
        Ok(ModelCompletion {
            situation_id: prompt.situation_id.clone(),
            text,
            backend_kind: self.backend.kind(),
            cache_hit: false,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: attempt,
        })
    }

    /// Completes every prompt with at most `max_parallel_requests` calls in
    /// flight. Output order follows input order; failures stay in place.
    pub fn batch_complete(&self, prompts: &[Prompt]) -> Vec<Result<ModelCompletion, BatchError>> {
        let workers = self.cfg.max_parallel_requests.max(1).min(prompts.len());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<ModelCompletion, BatchError>>>> =
            Mutex::new((0..prompts.len()).map(|_| None).collect());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(prompt) = prompts.get(i) else { break };
                    let result = self.complete(prompt).map_err(|error| BatchError {
                        situation_id: prompt.situation_id.clone(),
                        error,
                    });
                    slots.lock().expect("result slots poisoned")[i] = Some(result);
                });
            }
        });

        slots
            .into_inner()
            .expect("result slots poisoned")
            .into_iter()
            .map(|r| r.expect("every index is processed"))
            .collect()
    }
}
