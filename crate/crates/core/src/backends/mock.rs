use std::collections::{BTreeSet, HashMap};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{require_text, BackendError, ChatRequest, Embedder, Generator, Scorer};

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn unit_interval(bytes: &[u8]) -> f64 {
    let v = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    (v >> 11) as f64 / (1u64 << 53) as f64
}

/// Returns `GEN[<messages hash>:<seed>]`, or `GEN[<messages hash>]` without a
/// seed.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator;

impl MockGenerator {
    pub fn new() -> Self {
        Self
    }

    pub fn expected(request: &ChatRequest) -> String {
        match request.seed {
            Some(seed) => format!("GEN[{}:{seed}]", request.messages_hash()),
            None => format!("GEN[{}]", request.messages_hash()),
        }
    }
}

#[async_trait]
impl Generator for MockGenerator {
    fn id(&self) -> &str {
        "mock-gen"
    }

    async fn generate(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        Ok(Self::expected(request))
    }
}

/// Generator backed by a closure, for scripted fixtures.
pub struct FnGenerator<F> {
    id: String,
    f: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

#[async_trait]
impl<F> Generator for FnGenerator<F>
where
    F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    async fn generate(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (self.f)(request)
    }
}

/// What [`MockScorer`] returns for pairs missing from its table.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerFallback {
    /// Symmetric pseudo-random score from a hash of the pair and seed.
    Hashed { seed: u64 },
    /// Jaccard overlap of lower-cased word sets.
    Jaccard,
    Constant(f64),
    /// Unscripted pairs are an error.
    Strict,
}

/// Scripted scorer: table lookups first (either argument order), then the
/// fallback. Identical texts score 1.0 under the hashed and Jaccard
/// fallbacks.
#[derive(Debug, Clone)]
pub struct MockScorer {
    table: HashMap<(String, String), f64>,
    fallback: ScorerFallback,
}

impl MockScorer {
    pub fn new(fallback: ScorerFallback) -> Self {
        Self {
            table: HashMap::new(),
            fallback,
        }
    }

    pub fn with(mut self, a: impl Into<String>, b: impl Into<String>, score: f64) -> Self {
        self.table.insert((a.into(), b.into()), score);
        self
    }

    fn lookup(&self, a: &str, b: &str) -> Option<f64> {
        self.table
            .get(&(a.to_string(), b.to_string()))
            .or_else(|| self.table.get(&(b.to_string(), a.to_string())))
            .copied()
    }
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[async_trait]
impl Scorer for MockScorer {
    fn id(&self) -> &str {
        "mock-score"
    }

    async fn score(&self, text_a: &str, text_b: &str) -> Result<f64, BackendError> {
        require_text("text_a", text_a)?;
        require_text("text_b", text_b)?;
        if let Some(s) = self.lookup(text_a, text_b) {
            return Ok(s);
        }
        match &self.fallback {
            ScorerFallback::Hashed { .. } | ScorerFallback::Jaccard if text_a == text_b => Ok(1.0),
            ScorerFallback::Hashed { seed } => {
                let (lo, hi) = if text_a <= text_b {
                    (text_a, text_b)
                } else {
                    (text_b, text_a)
                };
                Ok(unit_interval(&digest(&[
                    &seed.to_le_bytes(),
                    lo.as_bytes(),
                    hi.as_bytes(),
                ])))
            }
            ScorerFallback::Jaccard => {
                let (a, b) = (words(text_a), words(text_b));
                let union = a.union(&b).count();
                if union == 0 {
                    return Ok(0.0);
                }
                Ok(a.intersection(&b).count() as f64 / union as f64)
            }
            ScorerFallback::Constant(v) => Ok(*v),
            ScorerFallback::Strict => Err(BackendError::InvalidRequest(format!(
                "unscripted pair ({text_a:?}, {text_b:?})"
            ))),
        }
    }
}

/// Scorer backed by a closure.
pub struct FnScorer<F> {
    id: String,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&str, &str) -> Result<f64, BackendError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

#[async_trait]
impl<F> Scorer for FnScorer<F>
where
    F: Fn(&str, &str) -> Result<f64, BackendError> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    async fn score(&self, text_a: &str, text_b: &str) -> Result<f64, BackendError> {
        (self.f)(text_a, text_b)
    }
}

/// Seeded signed feature hashing of lower-cased word tokens.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    /// Bucket index and sign for a (lower-cased) token.
    pub fn bucket(&self, token: &str) -> (usize, f64) {
        let d = digest(&[&self.seed.to_le_bytes(), token.as_bytes()]);
        let idx = u64::from_le_bytes(d[..8].try_into().unwrap()) % self.dim as u64;
        let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
        (idx as usize, sign)
    }

    pub fn tokens(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
}

#[async_trait]
impl Embedder for MockEmbedder {
    fn id(&self) -> &str {
        "mock-embed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        require_text("text", text)?;
        let tokens = Self::tokens(text);
        if tokens.is_empty() {
            return Err(BackendError::InvalidRequest(
                "text has no word tokens".into(),
            ));
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            let (i, s) = self.bucket(t);
            v[i] += s;
        }
        Ok(v)
    }
}

/// Uniform `[-1, 1)` components from a generator seeded by `(seed, text)`;
/// unrelated to the text's content.
#[derive(Debug, Clone)]
pub struct RandomEmbedder {
    dim: usize,
    seed: u64,
}

impl RandomEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let d = digest(&[&self.seed.to_le_bytes(), text.as_bytes()]);
        let mut rng = ChaCha8Rng::from_seed(d);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

#[async_trait]
impl Embedder for RandomEmbedder {
    fn id(&self) -> &str {
        "random-embed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        require_text("text", text)?;
        Ok(self.vector(text))
    }
}
