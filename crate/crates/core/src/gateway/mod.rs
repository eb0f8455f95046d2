//! Transport to text-generation and embedding backends.
//!
//! A [`Backend`] performs single requests. The [`Gateway`] wraps one with
//! bounded retries, exponential backoff with full jitter, and a cap on the
//! number of requests in flight at once.

mod http;
mod mock;

pub use http::OllamaBackend;
pub use mock::{EmbeddingMode, MockBackend, MockEmbedding, MockFailure, MockFixture, MockReply, MockRule};

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::prompting::PromptBundle;
use crate::similarity::{tokenize, TokenEmbeddingSet};

pub const ENV_ENDPOINT: &str = "SNIPDOC_ENDPOINT";
pub const ENV_MODEL: &str = "SNIPDOC_MODEL";

/// Failure of a single request.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("request timed out")]
    Timeout,
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("could not decode backend response: {0}")]
    Decode(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Unreachable(_) | TransportError::Timeout => true,
            TransportError::Status { status, .. } => *status >= 500 || *status == 429,
            TransportError::Decode(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    BackendUnreachable { attempts: u32, message: String },
    #[error("backend timed out after {attempts} attempt(s)")]
    BackendTimeout { attempts: u32 },
    #[error("backend returned an empty response after {attempts} attempt(s)")]
    EmptyResponse { attempts: u32 },
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("embedding shape mismatch: {0}")]
    DimensionMismatch(String),
    #[error("text has no tokens to embed")]
    EmptyText,
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

impl GatewayError {
    pub fn is_unreachable(&self) -> bool {
        matches!(self, GatewayError::BackendUnreachable { .. })
    }
}

/// A backend that answers one request at a time; retries and rate control
/// live in [`Gateway`].
pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    fn generate(
        &self,
        model: &str,
        bundle: &PromptBundle,
        timeout: Duration,
    ) -> Result<String, TransportError>;

    /// One vector per input string.
    fn embed(
        &self,
        model: &str,
        inputs: &[String],
        timeout: Duration,
    ) -> Result<Vec<Vec<f64>>, TransportError>;
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

mod duration_millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Model used for embeddings; falls back to `model_name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_model: Option<String>,
    #[serde(rename = "timeout_secs", with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    #[serde(rename = "backoff_base_ms", with = "duration_millis")]
    pub backoff_base: Duration,
    /// Sent as `Authorization: Bearer ...`; never serialised.
    #[serde(skip)]
    pub bearer_token: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint_url: "http://localhost:11434".into(),
            model_name: "llama3".into(),
            embed_model: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            max_in_flight: 4,
            backoff_base: Duration::from_millis(250),
            bearer_token: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn embedding_model(&self) -> &str {
        self.embed_model.as_deref().unwrap_or(&self.model_name)
    }

    /// Applies `SNIPDOC_ENDPOINT` / `SNIPDOC_MODEL` when set.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            if !v.is_empty() {
                self.endpoint_url = v;
            }
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            if !v.is_empty() {
                self.model_name = v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub backend_id: String,
}

/// Counting semaphore for requests in flight.
struct Limiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            max,
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().expect("limiter lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt<T> {
    Done(T),
    Empty,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    config: BackendConfig,
    limiter: Limiter,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, config: BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let limiter = Limiter::new(config.max_in_flight);
        Ok(Gateway {
            backend,
            config,
            limiter,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    fn backoff(&self, failed_attempts: u32) {
        let cap = self
            .config
            .backoff_base
            .saturating_mul(1u32 << (failed_attempts - 1).min(16));
        if cap.is_zero() {
            return;
        }
        let wait = rand::thread_rng().gen_range(0..=cap.as_micros() as u64);
        std::thread::sleep(Duration::from_micros(wait));
    }

    /// Runs `call` until it succeeds, fails permanently, or retries run out.
    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> Result<Attempt<T>, TransportError>,
    ) -> Result<(T, u32), GatewayError> {
        let max_attempts = self.config.max_retries + 1;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = {
                let _permit = self.limiter.acquire();
                call()
            };
            let failure = match outcome {
                Ok(Attempt::Done(value)) => return Ok((value, attempts)),
                Ok(Attempt::Empty) => GatewayError::EmptyResponse { attempts },
                Err(err) if !err.retryable() => {
                    return Err(match err {
                        TransportError::Decode(msg) => GatewayError::Rejected(msg),
                        other => GatewayError::Rejected(other.to_string()),
                    })
                }
                Err(TransportError::Timeout) => GatewayError::BackendTimeout { attempts },
                Err(err) => GatewayError::BackendUnreachable {
                    attempts,
                    message: err.to_string(),
                },
            };
            if attempts >= max_attempts {
                return Err(failure);
            }
            self.backoff(attempts);
        }
    }

    /// Sends a prompt and returns the backend's text untouched.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, GatewayError> {
        let started = Instant::now();
        let (raw_text, attempt_count) = self.with_retries(|| {
            let text = self
                .backend
                .generate(&self.config.model_name, bundle, self.config.timeout)?;
            Ok(if text.trim().is_empty() {
                Attempt::Empty
            } else {
                Attempt::Done(text)
            })
        })?;
        Ok(CompletionResult {
            raw_text,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count,
            backend_id: self.backend.id(),
        })
    }

    /// Embeds each token of `text` (as split by [`tokenize`]).
    pub fn embed(&self, text: &str) -> Result<TokenEmbeddingSet, GatewayError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let (vectors, _) = self.with_retries(|| {
            let vectors =
                self.backend
                    .embed(self.config.embedding_model(), &tokens, self.config.timeout)?;
            Ok(if vectors.is_empty() {
                Attempt::Empty
            } else {
                Attempt::Done(vectors)
            })
        })?;
        if vectors.len() != tokens.len() {
            return Err(GatewayError::DimensionMismatch(format!(
                "{} tokens but {} vectors",
                tokens.len(),
                vectors.len()
            )));
        }
        TokenEmbeddingSet::new(tokens, vectors)
            .map_err(|e| GatewayError::DimensionMismatch(e.to_string()))
    }
}

/// Builds a backend from a `--backend` value: `mock:<fixture.json>`, or
/// `ollama` / `http` for the HTTP backend at `config.endpoint_url`.
pub fn backend_from_spec(spec: &str, config: &BackendConfig) -> Result<Arc<dyn Backend>, String> {
    if let Some(path) = spec.strip_prefix("mock:") {
        return MockBackend::from_path(path)
            .map(|b| Arc::new(b) as Arc<dyn Backend>)
            .map_err(|e| format!("cannot load mock fixture {path}: {e}"));
    }
    match spec {
        "ollama" | "http" => Ok(Arc::new(OllamaBackend::new(
            config.endpoint_url.clone(),
            config.bearer_token.clone(),
        ))),
        other => Err(format!("unknown backend {other:?}; expected mock:<path> or ollama")),
    }
}
