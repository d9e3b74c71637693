//! Stage 1: one facet summary per schema facet, or adoption of pre-labeled
//! facet spans.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{ordered, ChatMessage, ChatRequest, Generator};
use crate::corpus::{content_hash, Document, FacetSchema, FacetUnit, Provenance, UnitKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Similar,
    Dissimilar,
    Regenerate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Summarize,
        Stage::Similar,
        Stage::Dissimilar,
        Stage::Regenerate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Summarize => "summarize",
            Stage::Similar => "similar",
            Stage::Dissimilar => "dissimilar",
            Stage::Regenerate => "regenerate",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Stage::Summarize => &["document", "facet"],
            Stage::Similar | Stage::Dissimilar => &["facet"],
            Stage::Regenerate => &["facet", "score", "low", "high"],
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            Stage::Summarize => include_str!("../templates/summarize.txt"),
            Stage::Similar => include_str!("../templates/similar.txt"),
            Stage::Dissimilar => include_str!("../templates/dissimilar.txt"),
            Stage::Regenerate => include_str!("../templates/regenerate.txt"),
        }
    }
}

const KNOWN_PLACEHOLDERS: [&str; 6] = ["document", "facet", "summary", "score", "low", "high"];

/// Prompt text with `{name}` placeholders; `hash` is the SHA-256 of the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub text: String,
    pub hash: String,
}

/// Values substituted into a template.
#[derive(Debug, Clone, Default)]
pub struct PromptVars<'a> {
    pub document: &'a str,
    pub facet: &'a str,
    pub summary: &'a str,
    pub score: Option<f64>,
    pub band: Option<(f64, f64)>,
}

impl PromptTemplate {
    pub fn new(stage: Stage, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let found = placeholders(&text);
        if let Some(unknown) = found.iter().find(|p| !KNOWN_PLACEHOLDERS.contains(&p.as_str())) {
            return Err(Error::invalid(format!(
                "{} template uses unknown placeholder {{{unknown}}}",
                stage.as_str()
            )));
        }
        for req in stage.required() {
            if !found.contains(*req) {
                return Err(Error::invalid(format!(
                    "{} template lacks required placeholder {{{req}}}",
                    stage.as_str()
                )));
            }
        }
        let hash = content_hash(text.as_bytes());
        Ok(Self { stage, text, hash })
    }

    pub fn default_for(stage: Stage) -> Self {
        Self::new(stage, stage.default_text()).expect("shipped templates are valid")
    }

    pub fn render(&self, vars: &PromptVars<'_>) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        let (low, high) = vars.band.unzip();
        self.text
            .replace("{document}", vars.document)
            .replace("{facet}", vars.facet)
            .replace("{summary}", vars.summary)
            .replace("{score}", &fmt(vars.score))
            .replace("{low}", &fmt(low))
            .replace("{high}", &fmt(high))
            .trim_end()
            .to_string()
    }
}

fn placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        rest = &rest[start + 1..];
        let Some(end) = rest.find('}') else { break };
        let name = &rest[..end];
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
            out.insert(name.to_string());
            rest = &rest[end + 1..];
        }
    }
    out
}

/// The four stage templates used by one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub summarize: PromptTemplate,
    pub similar: PromptTemplate,
    pub dissimilar: PromptTemplate,
    pub regenerate: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            summarize: PromptTemplate::default_for(Stage::Summarize),
            similar: PromptTemplate::default_for(Stage::Similar),
            dissimilar: PromptTemplate::default_for(Stage::Dissimilar),
            regenerate: PromptTemplate::default_for(Stage::Regenerate),
        }
    }
}

impl TemplateSet {
    /// Loads `<stage>.txt` files from `dir`; stages without a file keep the
    /// shipped default.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::invalid(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        let load = |stage: Stage| -> Result<PromptTemplate> {
            let path = dir.join(format!("{}.txt", stage.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                PromptTemplate::new(stage, text)
            } else {
                Ok(PromptTemplate::default_for(stage))
            }
        };
        Ok(Self {
            summarize: load(Stage::Summarize)?,
            similar: load(Stage::Similar)?,
            dissimilar: load(Stage::Dissimilar)?,
            regenerate: load(Stage::Regenerate)?,
        })
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        match stage {
            Stage::Summarize => &self.summarize,
            Stage::Similar => &self.similar,
            Stage::Dissimilar => &self.dissimilar,
            Stage::Regenerate => &self.regenerate,
        }
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        Stage::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), self.get(*s).hash.clone()))
            .collect()
    }
}

/// Decoding parameters for generation requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    pub seed: Option<u64>,
    pub summary_temperature: f64,
    pub synthesis_temperature: f64,
    pub max_tokens: u32,
    /// Summaries longer than this many words are kept but flagged.
    pub summary_word_cap: usize,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            seed: None,
            summary_temperature: 0.0,
            synthesis_temperature: 0.7,
            max_tokens: 512,
            summary_word_cap: 120,
        }
    }
}

pub const OVER_LENGTH_FLAG: &str = "over_length_cap";

/// Shared inputs of the generation stages.
#[derive(Clone, Copy)]
pub struct StageContext<'a> {
    pub generator: &'a dyn Generator,
    pub schema: &'a FacetSchema,
    pub templates: &'a TemplateSet,
    pub settings: &'a GenerationSettings,
    pub concurrency: usize,
}

/// Units produced by a corpus-level stage, plus documents that failed.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub units: Vec<FacetUnit>,
    pub completed_docs: Vec<String>,
    pub failures: Vec<(String, Error)>,
}

impl StageOutput {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn unit_id(doc_id: &str, facet: &str, kind: UnitKind, variant: u32) -> String {
    match kind {
        UnitKind::Summary | UnitKind::Original => format!("{doc_id}:{facet}:{kind}"),
        _ => format!("{doc_id}:{facet}:{kind}:{variant}"),
    }
}

/// The stage-1 request: a single user turn rendering the summarize prompt.
pub fn summary_prompt(doc: &Document, facet: &str, template: &PromptTemplate) -> String {
    template.render(&PromptVars {
        document: &doc.text,
        facet,
        ..Default::default()
    })
}

impl<'a> StageContext<'a> {
    pub fn summary_request(&self, doc: &Document, facet: &str, template: &PromptTemplate) -> ChatRequest {
        ChatRequest::new(vec![ChatMessage::user(summary_prompt(doc, facet, template))])
            .temperature(self.settings.summary_temperature)
            .max_tokens(self.settings.max_tokens)
            .seed(self.settings.seed)
    }

    pub async fn summarize_facet(
        &self,
        doc: &Document,
        facet: &str,
        template: &PromptTemplate,
    ) -> Result<FacetUnit> {
        if template.stage != Stage::Summarize {
            return Err(Error::invalid(format!(
                "summarize_facet needs a summarize template, got {}",
                template.stage.as_str()
            )));
        }
        self.schema.check_facet(facet)?;
        if doc.text.trim().is_empty() {
            return Err(Error::invalid(format!(
                "document `{}` has no text to summarize",
                doc.id
            )));
        }
        let request = self.summary_request(doc, facet, template);
        let text = self.generator.generate(&request).await?;
        if text.trim().is_empty() {
            return Err(crate::backends::BackendError::EmptyCompletion.into());
        }
        let mut flags = Vec::new();
        if text.split_whitespace().count() > self.settings.summary_word_cap {
            flags.push(OVER_LENGTH_FLAG.to_string());
        }
        Ok(FacetUnit {
            unit_id: unit_id(&doc.id, facet, UnitKind::Summary, 0),
            doc_id: doc.id.clone(),
            facet: facet.to_string(),
            kind: UnitKind::Summary,
            text,
            score: None,
            provenance: Provenance {
                backend_id: self.generator.id().to_string(),
                prompt_hash: template.hash.clone(),
                mining_round: 0,
                conditioned_on: None,
                parent: None,
            },
            variant: 0,
            flags,
        })
    }

    /// All `n` stage-1 units for one document, in schema order. Labeled
    /// facets are adopted; the rest are summarized.
    pub async fn decompose_document(&self, doc: &Document) -> Result<Vec<FacetUnit>> {
        doc.validate(self.schema)?;
        let adopted = if doc.has_labels() {
            adopt_labeled_facets(doc, self.schema)?
        } else {
            Vec::new()
        };
        let mut out = Vec::with_capacity(self.schema.len());
        for facet in &self.schema.facets {
            match adopted.iter().find(|u| &u.facet == facet) {
                Some(u) => out.push(u.clone()),
                None => {
                    out.push(
                        self.summarize_facet(doc, facet, &self.templates.summarize)
                            .await?,
                    )
                }
            }
        }
        Ok(out)
    }

    /// Decomposes every document with bounded parallelism. Output order is
    /// (document index, facet index); failed documents are reported, not
    /// fatal.
    pub async fn decompose_corpus(&self, docs: &[Document]) -> StageOutput {
        let results = ordered(docs.iter(), self.concurrency, |doc| async move {
            (doc.id.clone(), self.decompose_document(doc).await)
        })
        .await;
        collect_stage(results)
    }
}

pub(crate) fn collect_stage(results: Vec<(String, Result<Vec<FacetUnit>>)>) -> StageOutput {
    let mut out = StageOutput::default();
    for (doc_id, r) in results {
        match r {
            Ok(units) => {
                out.units.extend(units);
                out.completed_docs.push(doc_id);
            }
            Err(e) => out.failures.push((doc_id, e)),
        }
    }
    out
}

/// One original-kind unit per labeled facet, in schema order.
pub fn adopt_labeled_facets(doc: &Document, schema: &FacetSchema) -> Result<Vec<FacetUnit>> {
    let labels = match &doc.facet_labels {
        Some(l) if !l.is_empty() => l,
        _ => {
            return Err(Error::invalid(format!(
                "document `{}` has no facet labels; summarize its facets instead",
                doc.id
            )))
        }
    };
    for facet in labels.keys() {
        schema.check_facet(facet)?;
    }
    let units = schema
        .facets
        .iter()
        .filter_map(|facet| labels.get(facet).map(|text| (facet, text)))
        .map(|(facet, text)| FacetUnit {
            unit_id: unit_id(&doc.id, facet, UnitKind::Original, 0),
            doc_id: doc.id.clone(),
            facet: facet.clone(),
            kind: UnitKind::Original,
            text: text.clone(),
            score: None,
            provenance: Provenance {
                backend_id: "label".to_string(),
                prompt_hash: String::new(),
                mining_round: 0,
                conditioned_on: None,
                parent: None,
            },
            variant: 0,
            flags: Vec::new(),
        })
        .collect();
    Ok(units)
}
