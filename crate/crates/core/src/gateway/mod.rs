//! Text generation behind a single sampling contract.
//!
//! [`Gateway`] wraps any [`Backend`] with retries, exponential backoff, a
//! response cache and bounded-concurrency sampling. Backends are either the
//! OpenAI-compatible HTTP client in [`http`] or one of the deterministic mocks
//! in [`mock`].

pub mod cache;
pub mod http;
pub mod mock;

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ResponseCache};
pub use http::OpenAiBackend;
pub use mock::{ConfusionRates, MockScript, NoisyOracleBackend, ScriptRule, ScriptedBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend returned HTTP {status} after {attempts} attempt(s)")]
    Http { status: u16, attempts: u32 },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("mock backend: {0}")]
    Mock(String),
    #[error("{} sample(s) failed (indices {indices:?}): {first}", indices.len())]
    Samples {
        indices: Vec<u32>,
        first: Box<GatewayError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    fn is_transient(&self) -> bool {
        match self {
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            GatewayError::Timeout { .. } | GatewayError::Transport { .. } => true,
            _ => false,
        }
    }

    fn with_attempts(self, n: u32) -> Self {
        match self {
            GatewayError::Http { status, .. } => GatewayError::Http { status, attempts: n },
            GatewayError::Timeout { .. } => GatewayError::Timeout { attempts: n },
            GatewayError::Transport { message, .. } => GatewayError::Transport { message, attempts: n },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, GatewayError>;

/// One text-generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Distinguishes repeated identical prompts.
    pub sample_index: u32,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Connection settings for one model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendProfile {
    /// Base URL of an OpenAI-compatible API (e.g. `http://localhost:8000/v1`).
    pub endpoint: String,
    pub model_name: String,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Initial backoff; doubles after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for BackendProfile {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model_name: "llama-3.1-8b-instruct".into(),
            request_timeout_secs: 120.0,
            max_retries: 3,
            max_in_flight: 8,
            backoff_ms: 500,
        }
    }
}

impl BackendProfile {
    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::InvalidRequest("max_in_flight must be at least 1".into()));
        }
        if !(self.request_timeout_secs > 0.0) {
            return Err(GatewayError::InvalidRequest("request timeout must be positive".into()));
        }
        Ok(())
    }
}

/// A single-attempt text generator. Retries and caching live in [`Gateway`].
pub trait Backend: Send + Sync {
    fn model_name(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<String>;
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    max_retries: u32,
    max_in_flight: usize,
    backoff: Duration,
    cache: Option<Arc<ResponseCache>>,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, profile: &BackendProfile) -> Self {
        Self {
            backend,
            max_retries: profile.max_retries,
            max_in_flight: profile.max_in_flight.max(1),
            backoff: Duration::from_millis(profile.backoff_ms),
            cache: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn cache(&self) -> Option<&Arc<ResponseCache>> {
        self.cache.as_ref()
    }

    pub fn model_name(&self) -> &str {
        self.backend.model_name()
    }

    /// Number of backend attempts issued so far (cache hits excluded).
    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &GenerationRequest) -> Result<String> {
        request.validate()?;
        let key = CacheKey::new(self.backend.model_name(), request);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(hit);
        }

        let attempts = self.max_retries + 1;
        let mut delay = self.backoff;
        let mut attempt = 1;
        let text = loop {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.generate(request) {
                Ok(text) => break text,
                Err(e) if e.is_transient() && attempt < attempts => {
                    log::warn!("attempt {attempt}/{attempts} failed: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
                Err(e) => return Err(e.with_attempts(attempt)),
            }
        };

        if let Some(cache) = &self.cache {
            cache.insert(key, text.clone());
        }
        Ok(text)
    }

    /// Draws `n` completions with sample indices `0..n`, in index order.
    ///
    /// At most `max_in_flight` requests run at once. Output order never depends
    /// on scheduling.
    pub fn sample_n(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        n: u32,
        temperature: f64,
        max_output_tokens: u32,
    ) -> Result<Vec<String>> {
        if n == 0 {
            return Err(GatewayError::InvalidRequest("sample count must be at least 1".into()));
        }
        let request_for = |sample_index| GenerationRequest {
            system_prompt: system_prompt.to_string(),
            user_prompt: user_prompt.to_string(),
            temperature,
            max_output_tokens,
            sample_index,
        };

        let slots: Mutex<Vec<Option<Result<String>>>> = Mutex::new((0..n).map(|_| None).collect());
        let workers = self.max_in_flight.min(n as usize);
        if workers <= 1 {
            for i in 0..n {
                slots.lock()[i as usize] = Some(self.complete(&request_for(i)));
            }
        } else {
            let next = AtomicU32::new(0);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= n {
                            break;
                        }
                        let out = self.complete(&request_for(i));
                        slots.lock()[i as usize] = Some(out);
                    });
                }
            });
        }

        let mut texts = Vec::with_capacity(n as usize);
        let mut failed = Vec::new();
        let mut first = None;
        for (i, slot) in slots.into_inner().into_iter().enumerate() {
            match slot.expect("every index is visited") {
                Ok(t) => texts.push(t),
                Err(e) => {
                    failed.push(i as u32);
                    first.get_or_insert(e);
                }
            }
        }
        match first {
            None => Ok(texts),
            Some(e) => Err(GatewayError::Samples {
                indices: failed,
                first: Box::new(e),
            }),
        }
    }
}
