//! Domain records, ingestion, and persisted formats.
//!
//! Every record type here is an immutable value with snake_case field names
//! and is persisted as one JSON object per line.

mod io;
mod seed;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{read_json, read_jsonl, write_json, write_jsonl};
pub use seed::{derive_seed, seeded_rng};
pub use split::split_train_val;

/// Ordered facet names of a document domain. Order defines concatenation
/// order for pseudo-documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct FacetSchema {
    pub domain_name: String,
    pub facets: Vec<String>,
}

#[derive(Deserialize)]
struct RawSchema {
    domain_name: String,
    facets: Vec<String>,
}

impl TryFrom<RawSchema> for FacetSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FacetSchema::new(raw.domain_name, raw.facets)
    }
}

impl FacetSchema {
    pub fn new<S: Into<String>>(
        domain_name: impl Into<String>,
        facets: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let domain_name = domain_name.into();
        let facets: Vec<String> = facets.into_iter().map(Into::into).collect();
        if facets.len() < 2 {
            return Err(Error::invalid(format!(
                "schema `{domain_name}` needs at least 2 facets, got {}",
                facets.len()
            )));
        }
        let mut seen = HashSet::new();
        for f in &facets {
            if f.is_empty() {
                return Err(Error::invalid("facet names must be non-empty"));
            }
            if !seen.insert(f.as_str()) {
                return Err(Error::invalid(format!(
                    "schema `{domain_name}` repeats facet `{f}`"
                )));
            }
        }
        Ok(Self {
            domain_name,
            facets,
        })
    }

    /// Scientific abstracts: background, method, result.
    pub fn scientific() -> Self {
        Self::new("scientific", ["background", "method", "result"]).unwrap()
    }

    /// Exam items: story, question, options.
    pub fn education() -> Self {
        Self::new("education", ["story", "question", "options"]).unwrap()
    }

    /// Looks up a built-in schema by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "scientific" | "abstract" | "abstracts" => Some(Self::scientific()),
            "education" | "toefl" => Some(Self::education()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn index_of(&self, facet: &str) -> Option<usize> {
        self.facets.iter().position(|f| f == facet)
    }

    pub fn check_facet(&self, facet: &str) -> Result<usize> {
        self.index_of(facet).ok_or_else(|| Error::UnknownFacet {
            facet: facet.to_string(),
            schema: self.domain_name.clone(),
        })
    }
}

/// A corpus record. `facet_labels` is present for pre-faceted corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facet_labels: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            facet_labels: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_labels<K: Into<String>, V: Into<String>>(
        mut self,
        labels: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        self.facet_labels = Some(
            labels
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        );
        self
    }

    pub fn label(&self, facet: &str) -> Option<&str> {
        self.facet_labels
            .as_ref()
            .and_then(|l| l.get(facet))
            .map(String::as_str)
    }

    pub fn has_labels(&self) -> bool {
        self.facet_labels.as_ref().is_some_and(|l| !l.is_empty())
    }

    pub fn validate(&self, schema: &FacetSchema) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("document id must be non-empty"));
        }
        if let Some(labels) = &self.facet_labels {
            for (facet, text) in labels {
                schema.check_facet(facet)?;
                if text.trim().is_empty() {
                    return Err(Error::invalid(format!(
                        "document `{}` has an empty `{facet}` label",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Original,
    Summary,
    Similar,
    Dissimilar,
    Regenerated,
}

impl UnitKind {
    /// Units that stand for the document's own facet (stage 1 output).
    pub fn is_anchor(self) -> bool {
        matches!(self, UnitKind::Original | UnitKind::Summary)
    }

    /// Units usable in the target slot of a negative pseudo-document.
    pub fn is_negative(self) -> bool {
        matches!(self, UnitKind::Dissimilar | UnitKind::Regenerated)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Original => "original",
            UnitKind::Summary => "summary",
            UnitKind::Similar => "similar",
            UnitKind::Dissimilar => "dissimilar",
            UnitKind::Regenerated => "regenerated",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend_id: String,
    pub prompt_hash: String,
    #[serde(default)]
    pub mining_round: u32,
    /// Anchor unit (summary or original) the generation was conditioned on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioned_on: Option<String>,
    /// Unit this one was regenerated from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

/// One facet-scoped text fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetUnit {
    pub unit_id: String,
    pub doc_id: String,
    pub facet: String,
    pub kind: UnitKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub variant: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl FacetUnit {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invalid(format!("unit `{}` has empty text", self.unit_id)));
        }
        if self.kind != UnitKind::Regenerated && self.provenance.mining_round != 0 {
            return Err(Error::invalid(format!(
                "unit `{}` of kind {} has mining_round {}",
                self.unit_id, self.kind, self.provenance.mining_round
            )));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!(
                    "unit `{}` score {s} outside [0, 1]",
                    self.unit_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Anchor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub facet: String,
    pub unit_id: String,
}

/// A recomposed document: one unit per schema facet, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoDocument {
    pub id: String,
    pub doc_id: String,
    pub composition: Vec<Slot>,
    pub target_facet: String,
    pub polarity: Polarity,
    pub text: String,
}

impl PseudoDocument {
    pub fn unit_at(&self, facet: &str) -> Option<&str> {
        self.composition
            .iter()
            .find(|s| s.facet == facet)
            .map(|s| s.unit_id.as_str())
    }

    pub fn target_unit(&self) -> &str {
        self.unit_at(&self.target_facet)
            .expect("composition covers the target facet")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMode {
    SampleOne,
    CrossAll,
    RandomNegative,
    HardNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub target_facet: String,
    pub doc_id: String,
    pub query_ref: String,
    pub positive_ref: String,
    pub negative_ref: String,
    pub mode: TripletMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub relevance: u8,
}

/// One faceted query with graded (0-3) candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevancePool {
    pub facet: String,
    pub query_id: String,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_labels: Option<Vec<BTreeMap<String, u8>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

pub const MAX_RELEVANCE: u8 = 3;

/// Rounded mean of integer ratings, halves rounded up.
pub fn round_half_up_mean(values: &[u8]) -> u8 {
    assert!(!values.is_empty(), "mean of no ratings");
    let n = values.len() as u32;
    let sum: u32 = values.iter().map(|&v| u32::from(v)).sum();
    ((2 * sum + n) / (2 * n)) as u8
}

impl RelevancePool {
    /// Builds a pool whose final labels aggregate the annotators' ratings.
    /// Candidate order follows `doc_ids`.
    pub fn from_annotators(
        facet: impl Into<String>,
        query_id: impl Into<String>,
        doc_ids: &[String],
        labels: Vec<BTreeMap<String, u8>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("no annotator labels"));
        }
        let candidates = doc_ids
            .iter()
            .map(|id| {
                let ratings = labels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        l.get(id).copied().ok_or_else(|| {
                            Error::invalid(format!("annotator {i} did not rate `{id}`"))
                        })
                    })
                    .collect::<Result<Vec<u8>>>()?;
                Ok(Candidate {
                    doc_id: id.clone(),
                    relevance: round_half_up_mean(&ratings),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = Self {
            facet: facet.into(),
            query_id: query_id.into(),
            candidates,
            annotator_labels: Some(labels),
            meta: BTreeMap::new(),
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if c.relevance > MAX_RELEVANCE {
                return Err(Error::invalid(format!(
                    "pool `{}`/`{}`: relevance {} for `{}` outside 0-3",
                    self.facet, self.query_id, c.relevance, c.doc_id
                )));
            }
            if c.doc_id == self.query_id {
                return Err(Error::invalid(format!(
                    "pool `{}`/`{}` lists its query as a candidate",
                    self.facet, self.query_id
                )));
            }
            if !seen.insert(c.doc_id.as_str()) {
                return Err(Error::DuplicateId(c.doc_id.clone()));
            }
        }
        if let Some(labels) = &self.annotator_labels {
            for c in &self.candidates {
                let ratings: Vec<u8> = labels
                    .iter()
                    .filter_map(|l| l.get(&c.doc_id).copied())
                    .collect();
                if ratings.len() != labels.len() {
                    return Err(Error::invalid(format!(
                        "pool `{}`/`{}`: `{}` lacks a rating from every annotator",
                        self.facet, self.query_id, c.doc_id
                    )));
                }
                if ratings.iter().any(|&r| r > MAX_RELEVANCE) {
                    return Err(Error::invalid(format!(
                        "pool `{}`/`{}`: annotator rating outside 0-3 for `{}`",
                        self.facet, self.query_id, c.doc_id
                    )));
                }
                let expected = round_half_up_mean(&ratings);
                if expected != c.relevance {
                    return Err(Error::invalid(format!(
                        "pool `{}`/`{}`: `{}` has relevance {} but annotators average to {}",
                        self.facet, self.query_id, c.doc_id, c.relevance, expected
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn relevance_of(&self, doc_id: &str) -> Option<u8> {
        self.candidates
            .iter()
            .find(|c| c.doc_id == doc_id)
            .map(|c| c.relevance)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub documents: usize,
    pub units: usize,
    pub pseudo_documents: usize,
    pub triplets: usize,
    pub triplets_per_facet: BTreeMap<String, usize>,
}

/// Reproducibility record emitted next to every pipeline output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
    pub backend_ids: BTreeMap<String, String>,
    pub counts: ManifestCounts,
    pub tool_version: String,
    /// Stage name to status, e.g. `"decompose": "skipped: labeled"`.
    #[serde(default)]
    pub stages: BTreeMap<String, String>,
    /// Output file name to record count.
    #[serde(default)]
    pub files: BTreeMap<String, usize>,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reads and validates a document file. Duplicate ids are rejected.
pub fn load_documents(path: impl AsRef<Path>, schema: &FacetSchema) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let docs: Vec<Document> = read_jsonl(path)?;
    validate_documents(&docs, schema)?;
    Ok(docs)
}

pub fn validate_documents(docs: &[Document], schema: &FacetSchema) -> Result<()> {
    let mut seen = HashSet::new();
    for doc in docs {
        doc.validate(schema)?;
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::DuplicateId(doc.id.clone()));
        }
    }
    Ok(())
}

/// Hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
