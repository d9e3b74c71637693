//! JSON-over-HTTP contract for remote backends.
//!
//! | role     | request body                                   | response body                  |
//! |----------|------------------------------------------------|--------------------------------|
//! | generate | `{messages, temperature, max_tokens, seed?, model?}` | `{text}` or OpenAI `choices[0].message.content` |
//! | score    | `{text_a, text_b}`                             | `{score}` (raw, transformed client-side) |
//! | embed    | `{text}`                                       | `{vector: [f64]}`              |

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatRequest, Embedder, Generator, ScoreTransform, Scorer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub url: String,
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            model: None,
        }
    }

    /// Reads `FABLE_<ROLE>_URL`, and optionally `FABLE_<ROLE>_TOKEN` and
    /// `FABLE_<ROLE>_MODEL`, for role `GEN`, `SCORE`, or `EMBED`.
    pub fn from_env(role: &str) -> Result<Self, BackendError> {
        let var = |suffix: &str| std::env::var(format!("FABLE_{role}_{suffix}")).ok();
        let url = var("URL")
            .filter(|u| !u.is_empty())
            .ok_or_else(|| BackendError::NotConfigured(format!("FABLE_{role}_URL unset; {role}")))?;
        Ok(Self {
            url,
            token: var("TOKEN").filter(|t| !t.is_empty()),
            model: var("MODEL").filter(|m| !m.is_empty()),
        })
    }

    fn describe(&self, role: &str) -> String {
        format!("http-{role}:{}", self.url)
    }
}

fn map_reqwest(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout(Duration::ZERO)
    } else {
        BackendError::Transport(e.to_string())
    }
}

async fn post_json(
    client: &reqwest::Client,
    endpoint: &HttpEndpoint,
    body: &Value,
) -> Result<Value, BackendError> {
    let mut req = client.post(&endpoint.url).json(body);
    if let Some(token) = &endpoint.token {
        req = req.bearer_auth(token);
    }
    let resp = req.send().await.map_err(map_reqwest)?;
    let status = resp.status();
    if !status.is_success() {
        let mut body = resp.text().await.unwrap_or_default();
        body.truncate(512);
        return Err(BackendError::Status {
            status: status.as_u16(),
            body,
        });
    }
    resp.json::<Value>()
        .await
        .map_err(|e| BackendError::InvalidResponse(e.to_string()))
}

pub struct HttpGenerator {
    client: reqwest::Client,
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpGenerator {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self {
            client: reqwest::Client::new(),
            id: endpoint.describe("gen"),
            endpoint,
        }
    }
}

fn completion_text(body: &Value) -> Option<&str> {
    body.get("text").and_then(Value::as_str).or_else(|| {
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
    })
}

#[async_trait]
impl Generator for HttpGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    async fn generate(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut body = serde_json::to_value(request).expect("request serializes");
        if let Some(model) = &self.endpoint.model {
            body["model"] = json!(model);
        }
        let resp = post_json(&self.client, &self.endpoint, &body).await?;
        let text = completion_text(&resp).ok_or_else(|| {
            BackendError::InvalidResponse("no `text` or `choices[0].message.content`".into())
        })?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(text.to_string())
    }
}

pub struct HttpScorer {
    client: reqwest::Client,
    endpoint: HttpEndpoint,
    transform: ScoreTransform,
    id: String,
}

impl HttpScorer {
    pub fn new(endpoint: HttpEndpoint, transform: ScoreTransform) -> Self {
        Self {
            client: reqwest::Client::new(),
            id: endpoint.describe("score"),
            endpoint,
            transform,
        }
    }
}

#[async_trait]
impl Scorer for HttpScorer {
    fn id(&self) -> &str {
        &self.id
    }

    async fn score(&self, text_a: &str, text_b: &str) -> Result<f64, BackendError> {
        let resp = post_json(
            &self.client,
            &self.endpoint,
            &json!({ "text_a": text_a, "text_b": text_b }),
        )
        .await?;
        let raw = resp
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| BackendError::InvalidResponse("no numeric `score`".into()))?;
        self.transform.apply(raw)
    }
}

pub struct HttpEmbedder {
    client: reqwest::Client,
    endpoint: HttpEndpoint,
    dim: usize,
    id: String,
}

impl HttpEmbedder {
    pub fn new(endpoint: HttpEndpoint, dim: usize) -> Self {
        Self {
            client: reqwest::Client::new(),
            id: endpoint.describe("embed"),
            endpoint,
            dim,
        }
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let resp = post_json(&self.client, &self.endpoint, &json!({ "text": text })).await?;
        let vector: Vec<f64> = resp
            .get("vector")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| BackendError::InvalidResponse("no numeric `vector`".into()))?;
        if vector.len() != self.dim {
            return Err(BackendError::InvalidResponse(format!(
                "expected {}-dim vector, got {}",
                self.dim,
                vector.len()
            )));
        }
        Ok(vector)
    }
}
