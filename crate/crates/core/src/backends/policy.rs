use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::{require_text, BackendError, ChatRequest, Embedder, Generator, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendPolicy {
    pub max_concurrency: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_multiplier: f64,
    pub timeout_ms: u64,
}

impl Default for BackendPolicy {
    fn default() -> Self {
        Self {
            max_concurrency: 8,
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_multiplier: 2.0,
            timeout_ms: 120_000,
        }
    }
}

impl BackendPolicy {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency == 0 {
            return Err(BackendError::InvalidRequest(
                "max_concurrency must be >= 1".into(),
            ));
        }
        if !(self.backoff_multiplier >= 1.0) {
            return Err(BackendError::InvalidRequest(
                "backoff_multiplier must be >= 1".into(),
            ));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidRequest("timeout must be > 0".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.backoff_multiplier.powi(retry.saturating_sub(1) as i32);
        Duration::from_secs_f64(self.backoff_base_ms as f64 / 1000.0 * factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retried<T> {
    pub value: T,
    pub retries: u32,
}

/// Runs `op` under the policy's per-attempt timeout, retrying retryable
/// failures up to `max_retries` times with exponential backoff.
pub async fn with_retries<T, F, Fut>(
    policy: &BackendPolicy,
    mut op: F,
) -> Result<Retried<T>, BackendError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<T, BackendError>>,
{
    let mut retries = 0;
    loop {
        let outcome = match tokio::time::timeout(policy.timeout(), op()).await {
            Ok(r) => r,
            Err(_) => Err(BackendError::Timeout(policy.timeout())),
        };
        match outcome {
            Ok(value) => return Ok(Retried { value, retries }),
            Err(e) if !e.is_retryable() => return Err(e),
            Err(e) if retries >= policy.max_retries => {
                return Err(if policy.max_retries == 0 {
                    e
                } else {
                    BackendError::Exhausted {
                        attempts: retries + 1,
                        last: Box::new(e),
                    }
                });
            }
            Err(e) => {
                retries += 1;
                tracing::debug!(retry = retries, error = %e, "backend call failed, retrying");
                tokio::time::sleep(policy.backoff(retries)).await;
            }
        }
    }
}

/// Wraps a backend with validation, timeout, retries, and an in-flight limit.
pub struct Guarded<B> {
    inner: B,
    policy: BackendPolicy,
    permits: Arc<Semaphore>,
    retries: AtomicU64,
}

impl<B> Guarded<B> {
    pub fn new(inner: B, policy: BackendPolicy) -> Self {
        let permits = Arc::new(Semaphore::new(policy.max_concurrency.max(1)));
        Self {
            inner,
            policy,
            permits,
            retries: AtomicU64::new(0),
        }
    }

    /// Total retries performed across all calls.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    async fn run<T, F, Fut>(&self, op: F) -> Result<T, BackendError>
    where
        F: FnMut() -> Fut,
        Fut: Future<Output = Result<T, BackendError>>,
    {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let out = with_retries(&self.policy, op).await?;
        self.retries
            .fetch_add(u64::from(out.retries), Ordering::Relaxed);
        Ok(out.value)
    }
}

#[async_trait]
impl<G: Generator> Generator for Guarded<G> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn generate(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let text = self.run(|| self.inner.generate(request)).await?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(text)
    }
}

#[async_trait]
impl<S: Scorer> Scorer for Guarded<S> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn score(&self, text_a: &str, text_b: &str) -> Result<f64, BackendError> {
        require_text("text_a", text_a)?;
        require_text("text_b", text_b)?;
        let s = self.run(|| self.inner.score(text_a, text_b)).await?;
        if !(0.0..=1.0).contains(&s) {
            return Err(BackendError::InvalidResponse(format!(
                "score {s} outside [0, 1]"
            )));
        }
        Ok(s)
    }
}

#[async_trait]
impl<E: Embedder> Embedder for Guarded<E> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    async fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        require_text("text", text)?;
        let v = self.run(|| self.inner.embed(text)).await?;
        if v.len() != self.inner.dim() {
            return Err(BackendError::InvalidResponse(format!(
                "expected {}-dim vector, got {}",
                self.inner.dim(),
                v.len()
            )));
        }
        Ok(v)
    }
}
