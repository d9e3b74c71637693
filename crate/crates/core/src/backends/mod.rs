//! Pluggable generation, pairwise-scoring, and embedding backends.
//!
//! Every backend is safe for concurrent calls. [`Guarded`] adds the
//! request validation, timeout, retry, and concurrency limits described by a
//! [`BackendPolicy`]; the mock backends are pure functions of their input and
//! seed so that CI never needs the network.

mod http;
mod mock;
mod policy;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use serde::{Deserialize, Serialize};

pub use http::{HttpEmbedder, HttpEndpoint, HttpGenerator, HttpScorer};
pub use mock::{
    FnGenerator, FnScorer, MockEmbedder, MockGenerator, MockScorer, RandomEmbedder,
    ScorerFallback,
};
pub use policy::{with_retries, BackendPolicy, Guarded, Retried};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("service returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("empty completion")]
    EmptyCompletion,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("{0} backend is not configured")]
    NotConfigured(String),
    #[error("giving up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Transport-class failures are retried; validation failures never are.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => (500..600).contains(status),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            max_tokens: 512,
            seed: None,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// At least one user turn; after an optional leading system message the
    /// roles alternate starting with the user.
    pub fn validate(&self) -> Result<(), BackendError> {
        let invalid = |m: &str| Err(BackendError::InvalidRequest(m.to_string()));
        if !(self.temperature >= 0.0) {
            return invalid("temperature must be >= 0");
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be > 0");
        }
        let turns = match self.messages.first() {
            Some(m) if m.role == Role::System => &self.messages[1..],
            _ => &self.messages[..],
        };
        if turns.is_empty() {
            return invalid("at least one user message is required");
        }
        for (i, m) in turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return invalid("roles must alternate user/assistant after the system message");
            }
        }
        Ok(())
    }

    /// Short content digest of the message list.
    pub fn messages_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.messages).expect("messages serialize");
        crate::corpus::content_hash(&bytes)[..16].to_string()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.messages.iter().filter(|m| m.role == role).count()
    }
}

#[async_trait]
pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    async fn generate(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Pairwise relevance scorer returning a value in `[0, 1]`.
#[async_trait]
pub trait Scorer: Send + Sync {
    fn id(&self) -> &str;
    async fn score(&self, text_a: &str, text_b: &str) -> Result<f64, BackendError>;
}

#[async_trait]
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    async fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

/// Maps raw service scores into `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTransform {
    /// For services that already emit normalized scores; out-of-range values
    /// are rejected.
    Identity,
    #[default]
    Logistic,
}

impl ScoreTransform {
    pub fn apply(self, raw: f64) -> Result<f64, BackendError> {
        if !raw.is_finite() {
            return Err(BackendError::InvalidResponse(format!("non-finite score {raw}")));
        }
        match self {
            ScoreTransform::Logistic => Ok(1.0 / (1.0 + (-raw).exp())),
            ScoreTransform::Identity if (0.0..=1.0).contains(&raw) => Ok(raw),
            ScoreTransform::Identity => Err(BackendError::InvalidResponse(format!(
                "score {raw} outside [0, 1] under identity transform"
            ))),
        }
    }
}

/// Backends for one run, shared across stages.
#[derive(Clone)]
pub struct BackendSet {
    pub generator: Arc<dyn Generator>,
    pub scorer: Arc<dyn Scorer>,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub concurrency: usize,
}

impl BackendSet {
    /// Deterministic mock backends.
    pub fn mock(seed: u64, concurrency: usize) -> Self {
        Self {
            generator: Arc::new(MockGenerator::new()),
            scorer: Arc::new(MockScorer::new(ScorerFallback::Hashed { seed })),
            embedder: Some(Arc::new(MockEmbedder::new(64, seed))),
            concurrency: concurrency.max(1),
        }
    }
}

/// Runs `f` over `items` with at most `concurrency` futures in flight;
/// outputs keep input order regardless of completion order.
pub async fn ordered<T, R, F, Fut>(
    items: impl IntoIterator<Item = T>,
    concurrency: usize,
    f: F,
) -> Vec<R>
where
    F: FnMut(T) -> Fut,
    Fut: Future<Output = R>,
{
    futures::stream::iter(items)
        .map(f)
        .buffered(concurrency.max(1))
        .collect()
        .await
}

pub(crate) fn require_text(name: &str, text: &str) -> Result<(), BackendError> {
    if text.trim().is_empty() {
        Err(BackendError::InvalidRequest(format!("{name} must be non-empty")))
    } else {
        Ok(())
    }
}
