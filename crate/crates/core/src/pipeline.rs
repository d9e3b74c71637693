//! End-to-end orchestration: decompose (or adopt labels), synthesize,
//! recompose, optionally mine, then write every intermediate file and one
//! run manifest.
//!
//! With `resume`, per-document outputs already present in the output
//! directory are reused, so a run interrupted by a backend failure only
//! redoes the documents that did not complete.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendPolicy, BackendSet, Embedder, Generator, Guarded, HttpEmbedder, HttpEndpoint,
    HttpGenerator, HttpScorer, MockEmbedder, MockGenerator, MockScorer, ScoreTransform, Scorer,
    ScorerFallback,
};
use crate::corpus::{
    content_hash, derive_seed, load_documents, read_jsonl, split_train_val, write_json,
    write_jsonl, Document, FacetSchema, FacetUnit, ManifestCounts, RunManifest, UnitKind,
    TOOL_VERSION,
};
use crate::decompose::{GenerationSettings, StageContext, StageOutput, TemplateSet};
use crate::evaluate::EvalConfig;
use crate::mine::{without_negatives, Miner, MiningConfig};
use crate::recompose::{recompose_corpus, PairingConfig, RecomposeOutput};
use crate::{Error, Result};

pub const UNITS_FILE: &str = "units.jsonl";
pub const UNITS2_FILE: &str = "units2.jsonl";
pub const PSEUDO_FILE: &str = "pseudo_documents.jsonl";
pub const TRIPLETS_FILE: &str = "triplets.jsonl";
pub const MINED_UNITS_FILE: &str = "units_mined.jsonl";
pub const HN_PSEUDO_FILE: &str = "pseudo_documents_hn.jsonl";
pub const HN_TRIPLETS_FILE: &str = "triplets_hn.jsonl";
pub const MINING_REPORT_FILE: &str = "mining_report.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

/// Effective run configuration. Loaded from TOML, overridden by CLI flags,
/// embedded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Built-in schema name, or a label for `facets`.
    pub schema: String,
    pub facets: Option<Vec<String>>,
    pub backend: BackendKind,
    pub concurrency: usize,
    /// Similar/dissimilar components generated per (document, facet).
    pub variants: u32,
    pub template_dir: Option<PathBuf>,
    pub mine: bool,
    pub train_ratio: Option<f64>,
    pub score_transform: ScoreTransform,
    pub generation: GenerationSettings,
    pub pairing: PairingConfig,
    pub mining: MiningConfig,
    pub policy: BackendPolicy,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            schema: "scientific".to_string(),
            facets: None,
            backend: BackendKind::Mock,
            concurrency: 8,
            variants: 1,
            template_dir: None,
            mine: false,
            train_ratio: None,
            score_transform: ScoreTransform::Logistic,
            generation: GenerationSettings::default(),
            pairing: PairingConfig::default(),
            mining: MiningConfig::default(),
            policy: BackendPolicy::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Propagates the run seed and concurrency into every stage section.
    pub fn effective(mut self) -> Self {
        self.generation.seed = Some(self.seed);
        self.pairing.seed = Some(self.seed);
        self.mining.seed = Some(self.seed);
        self.mining.separator = self.pairing.separator.clone();
        self.concurrency = self.concurrency.max(1);
        self.policy.max_concurrency = self.concurrency;
        self
    }

    pub fn schema(&self) -> Result<FacetSchema> {
        match &self.facets {
            Some(f) => FacetSchema::new(self.schema.clone(), f.iter().cloned()),
            None => FacetSchema::builtin(&self.schema)
                .ok_or_else(|| Error::invalid(format!("unknown schema `{}`", self.schema))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema()?;
        self.pairing.validate()?;
        if self.mine {
            self.mining.validate()?;
        }
        self.policy.validate().map_err(|e| Error::invalid(e.to_string()))?;
        self.eval.validate()?;
        if self.variants == 0 {
            return Err(Error::invalid("variants must be >= 1"));
        }
        if let Some(r) = self.train_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(format!("train ratio {r} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match &self.template_dir {
            Some(dir) => TemplateSet::load_dir(dir),
            None => Ok(TemplateSet::default()),
        }
    }

    /// Hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        content_hash(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Backends for `config`: deterministic mocks, or HTTP services from
/// `FABLE_GEN_*`, `FABLE_SCORE_*` and (optionally) `FABLE_EMBED_*`. Every
/// backend is wrapped in the retry/concurrency policy.
pub fn build_backends(config: &PipelineConfig) -> Result<BackendSet> {
    let policy = config.policy.clone();
    let (generator, scorer, embedder): (Arc<dyn Generator>, Arc<dyn Scorer>, Option<Arc<dyn Embedder>>) =
        match config.backend {
            BackendKind::Mock => (
                Arc::new(Guarded::new(MockGenerator::new(), policy.clone())),
                Arc::new(Guarded::new(
                    MockScorer::new(ScorerFallback::Hashed { seed: config.seed }),
                    policy.clone(),
                )),
                Some(Arc::new(Guarded::new(MockEmbedder::new(64, config.seed), policy))),
            ),
            BackendKind::Http => {
                let embedder: Option<Arc<dyn Embedder>> = match HttpEndpoint::from_env("EMBED") {
                    Ok(ep) => {
                        let dim = std::env::var("FABLE_EMBED_DIM")
                            .ok()
                            .and_then(|d| d.parse().ok())
                            .ok_or_else(|| Error::invalid("FABLE_EMBED_DIM must be set with FABLE_EMBED_URL"))?;
                        Some(Arc::new(Guarded::new(HttpEmbedder::new(ep, dim), policy.clone())))
                    }
                    Err(_) => None,
                };
                (
                    Arc::new(Guarded::new(HttpGenerator::new(HttpEndpoint::from_env("GEN")?), policy.clone())),
                    Arc::new(Guarded::new(
                        HttpScorer::new(HttpEndpoint::from_env("SCORE")?, config.score_transform),
                        policy,
                    )),
                    embedder,
                )
            }
        };
    Ok(BackendSet {
        generator,
        scorer,
        embedder,
        concurrency: config.concurrency.max(1),
    })
}

/// Stage-1 units of `doc` if `prior` holds one anchor per facet.
fn reuse_stage1(prior: &[FacetUnit], doc: &Document, schema: &FacetSchema) -> Option<Vec<FacetUnit>> {
    schema
        .facets
        .iter()
        .map(|f| {
            prior
                .iter()
                .find(|u| u.doc_id == doc.id && &u.facet == f && u.kind.is_anchor())
                .cloned()
        })
        .collect()
}

/// Stage-2 units of `doc` in corpus output order if `prior` is complete.
fn reuse_stage2(
    prior: &[FacetUnit],
    doc: &Document,
    schema: &FacetSchema,
    variants: u32,
) -> Option<Vec<FacetUnit>> {
    let find = |f: &str, kind: UnitKind, v: u32| {
        prior
            .iter()
            .find(|u| u.doc_id == doc.id && u.facet == f && u.kind == kind && u.variant == v)
            .cloned()
    };
    let mut out = Vec::new();
    for f in &schema.facets {
        out.push(prior.iter().find(|u| u.doc_id == doc.id && &u.facet == f && u.kind.is_anchor())?.clone());
        for v in 0..variants {
            out.push(find(f, UnitKind::Similar, v)?);
        }
        for v in 0..variants {
            out.push(find(f, UnitKind::Dissimilar, v)?);
        }
    }
    Some(out)
}

/// Splices reused and fresh per-document results back into corpus order.
fn merge(docs: &[Document], reused: BTreeMap<usize, Vec<FacetUnit>>, fresh: StageOutput, fresh_docs: &[&Document]) -> StageOutput {
    let mut by_doc: BTreeMap<usize, Vec<FacetUnit>> = reused;
    let index: BTreeMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let done: HashSet<&str> = fresh.completed_docs.iter().map(String::as_str).collect();
    for d in fresh_docs.iter().filter(|d| done.contains(d.id.as_str())) {
        by_doc.insert(index[d.id.as_str()], Vec::new());
    }
    for u in fresh.units {
        by_doc.get_mut(&index[u.doc_id.as_str()]).expect("completed doc").push(u);
    }
    let mut out = StageOutput {
        failures: fresh.failures,
        ..Default::default()
    };
    for (i, units) in by_doc {
        out.completed_docs.push(docs[i].id.clone());
        out.units.extend(units);
    }
    out
}

/// Stage 1 with optional reuse of earlier per-document results.
pub async fn run_decompose(ctx: &StageContext<'_>, docs: &[Document], prior: &[FacetUnit]) -> StageOutput {
    let mut reused = BTreeMap::new();
    let mut todo = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        match reuse_stage1(prior, d, ctx.schema) {
            Some(u) => {
                reused.insert(i, u);
            }
            None => todo.push(d.clone()),
        }
    }
    let fresh = ctx.decompose_corpus(&todo).await;
    merge(docs, reused, fresh, &todo.iter().collect::<Vec<_>>())
}

/// Stage 2 with optional reuse of earlier per-document results.
pub async fn run_synthesize(
    ctx: &StageContext<'_>,
    docs: &[Document],
    anchors: &[FacetUnit],
    variants: u32,
    prior: &[FacetUnit],
) -> StageOutput {
    let mut reused = BTreeMap::new();
    let mut todo = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        match reuse_stage2(prior, d, ctx.schema, variants) {
            Some(u) => {
                reused.insert(i, u);
            }
            None => todo.push(d.clone()),
        }
    }
    let fresh = ctx.synthesize_corpus(&todo, anchors, variants).await;
    merge(docs, reused, fresh, &todo.iter().collect::<Vec<_>>())
}

/// Turns a stage's per-document failures into an error: a pure backend
/// failure when nothing completed, a partial completion otherwise.
pub fn stage_error(stage: &str, output: StageOutput, total: usize, hint: &str) -> Error {
    let completed = output.completed_docs.len();
    let (doc, first) = output
        .failures
        .into_iter()
        .next()
        .expect("stage_error needs a failure");
    tracing::error!(stage, doc = %doc, error = %first, "stage failed");
    if completed == 0 && matches!(first, Error::Backend(_)) {
        return first;
    }
    Error::Partial {
        stage: stage.to_string(),
        completed,
        total,
        hint: hint.to_string(),
        source: Box::new(first),
    }
}

/// Manifest skeleton shared by the pipeline and single-stage commands.
pub fn base_manifest(
    config: &PipelineConfig,
    templates: &TemplateSet,
    backends: Option<&BackendSet>,
) -> RunManifest {
    let mut backend_ids = BTreeMap::new();
    if let Some(b) = backends {
        backend_ids.insert("generator".to_string(), b.generator.id().to_string());
        backend_ids.insert("scorer".to_string(), b.scorer.id().to_string());
        if let Some(e) = &b.embedder {
            backend_ids.insert("embedder".to_string(), e.id().to_string());
        }
    }
    RunManifest {
        seed: config.seed,
        config_hash: config.hash(),
        prompt_hashes: templates.hashes(),
        backend_ids,
        counts: ManifestCounts::default(),
        tool_version: TOOL_VERSION.to_string(),
        stages: BTreeMap::new(),
        files: BTreeMap::new(),
        config: serde_json::to_value(config).expect("config serializes"),
    }
}

fn read_prior(path: &Path, resume: bool) -> Result<Vec<FacetUnit>> {
    if resume && path.exists() {
        read_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub schema: FacetSchema,
    pub templates: TemplateSet,
    pub backends: BackendSet,
}

impl Pipeline {
    /// Validates `config` (made effective) and builds its backends.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let config = config.effective();
        config.validate()?;
        let backends = build_backends(&config)?;
        Self::with_backends(config, backends)
    }

    /// Uses caller-supplied backends, e.g. scripted mocks.
    pub fn with_backends(config: PipelineConfig, backends: BackendSet) -> Result<Self> {
        let config = config.effective();
        config.validate()?;
        Ok(Self {
            schema: config.schema()?,
            templates: config.templates()?,
            config,
            backends,
        })
    }

    fn ctx(&self) -> StageContext<'_> {
        StageContext {
            generator: &*self.backends.generator,
            schema: &self.schema,
            templates: &self.templates,
            settings: &self.config.generation,
            concurrency: self.backends.concurrency,
        }
    }

    pub async fn run_file(&self, docs_path: &Path, out_dir: &Path, resume: bool) -> Result<RunManifest> {
        let docs = load_documents(docs_path, &self.schema)?;
        self.run(&docs, out_dir, resume).await
    }

    /// Runs every stage over `docs`, writing outputs into `out_dir`. On a
    /// stage failure the completed documents' outputs and the manifest are
    /// still written before the error is returned.
    pub async fn run(&self, docs: &[Document], out_dir: &Path, resume: bool) -> Result<RunManifest> {
        if docs.is_empty() {
            return Err(Error::invalid("no documents to process"));
        }
        crate::corpus::validate_documents(docs, &self.schema)?;
        let ctx = self.ctx();
        let mut manifest = base_manifest(&self.config, &self.templates, Some(&self.backends));
        manifest.counts.documents = docs.len();
        let total = docs.len();

        let labeled = docs
            .iter()
            .all(|d| self.schema.facets.iter().all(|f| d.label(f).is_some()));
        let stage1 = run_decompose(&ctx, docs, &read_prior(&out_dir.join(UNITS_FILE), resume)?).await;
        manifest.files.insert(UNITS_FILE.into(), write_jsonl(out_dir.join(UNITS_FILE), &stage1.units)?);
        if !stage1.is_complete() {
            manifest.stages.insert("decompose".into(), format!("failed: {} of {total} documents completed", stage1.completed_docs.len()));
            self.finish(&mut manifest, out_dir)?;
            return Err(stage_error("decompose", stage1, total, "completed units were kept; rerun the pipeline with --resume"));
        }
        manifest.stages.insert(
            "decompose".into(),
            if labeled { "skipped: labeled".into() } else { "completed".into() },
        );

        let prior2 = read_prior(&out_dir.join(UNITS2_FILE), resume)?;
        let stage2 = run_synthesize(&ctx, docs, &stage1.units, self.config.variants, &prior2).await;
        manifest.files.insert(UNITS2_FILE.into(), write_jsonl(out_dir.join(UNITS2_FILE), &stage2.units)?);
        manifest.counts.units = stage2.units.len();
        if !stage2.is_complete() {
            manifest.stages.insert("synthesize".into(), format!("failed: {} of {total} documents completed", stage2.completed_docs.len()));
            self.finish(&mut manifest, out_dir)?;
            return Err(stage_error("synthesize", stage2, total, "completed units were kept; rerun the pipeline with --resume"));
        }
        manifest.stages.insert("synthesize".into(), "completed".into());

        let RecomposeOutput { pseudo_documents, mut triplets } =
            recompose_corpus(&stage2.units, &self.schema, &self.config.pairing)?;
        manifest.stages.insert("recompose".into(), "completed".into());

        let mut hn_triplets = Vec::new();
        let mut mining_failure = None;
        if self.config.mine {
            let miner = Miner {
                ctx,
                scorer: &*self.backends.scorer,
                config: &self.config.mining,
            };
            let mined = miner.run(docs, &stage2.units).await?;
            triplets = without_negatives(triplets, &pseudo_documents, &mined.dropped);
            manifest.files.insert(MINED_UNITS_FILE.into(), write_jsonl(out_dir.join(MINED_UNITS_FILE), &mined.units)?);
            manifest.files.insert(
                HN_PSEUDO_FILE.into(),
                write_jsonl(out_dir.join(HN_PSEUDO_FILE), &mined.supplemental.pseudo_documents)?,
            );
            manifest.files.insert(
                HN_TRIPLETS_FILE.into(),
                write_jsonl(out_dir.join(HN_TRIPLETS_FILE), &mined.supplemental.triplets)?,
            );
            write_json(out_dir.join(MINING_REPORT_FILE), &mined.report)?;
            hn_triplets = mined.supplemental.triplets;
            let c = &mined.report.counts;
            if mined.failures.is_empty() {
                manifest.stages.insert(
                    "mine".into(),
                    format!("completed: {} easy, {} accepted, {} rejected", c.easy, c.accepted, c.rejected),
                );
            } else {
                manifest.stages.insert("mine".into(), format!("failed: {} of {} regenerations", c.failed, c.regenerations));
                mining_failure = Some((mined.failures, c.regenerations));
            }
        } else {
            manifest.stages.insert("mine".into(), "skipped: disabled".into());
        }

        manifest.files.insert(PSEUDO_FILE.into(), write_jsonl(out_dir.join(PSEUDO_FILE), &pseudo_documents)?);
        manifest.files.insert(TRIPLETS_FILE.into(), write_jsonl(out_dir.join(TRIPLETS_FILE), &triplets)?);
        manifest.counts.pseudo_documents = pseudo_documents.len();
        manifest.counts.triplets = triplets.len();
        for t in &triplets {
            *manifest.counts.triplets_per_facet.entry(t.target_facet.clone()).or_insert(0) += 1;
        }

        if let Some(ratio) = self.config.train_ratio {
            let all: Vec<_> = triplets.iter().chain(&hn_triplets).cloned().collect();
            if !all.is_empty() {
                let (train, val) = split_train_val(&all, ratio, derive_seed(self.config.seed, "split"))?;
                manifest.files.insert(TRAIN_FILE.into(), write_jsonl(out_dir.join(TRAIN_FILE), &train)?);
                manifest.files.insert(VAL_FILE.into(), write_jsonl(out_dir.join(VAL_FILE), &val)?);
            }
        }

        self.finish(&mut manifest, out_dir)?;
        if let Some((failures, attempted)) = mining_failure {
            let failed = failures.len();
            let (_, first) = failures.into_iter().next().unwrap();
            return Err(Error::Partial {
                stage: "mine".into(),
                completed: attempted - failed,
                total: attempted,
                hint: "base triplets and accepted supplements were written; rerun `fable mine` to retry".into(),
                source: Box::new(first),
            });
        }
        Ok(manifest)
    }

    fn finish(&self, manifest: &mut RunManifest, out_dir: &Path) -> Result<()> {
        write_json(out_dir.join(MANIFEST_FILE), manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, FnGenerator};
    use crate::corpus::Triplet;

    fn docs(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document::new(format!("d{i}"), format!("Background {i}. Method {i}. Result {i}.")))
            .collect()
    }

    fn config() -> PipelineConfig {
        PipelineConfig {
            seed: 22,
            concurrency: 4,
            ..Default::default()
        }
    }

    #[tokio::test]
    async fn two_docs_cross_all() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(config()).unwrap();
        let m = p.run(&docs(2), dir.path(), false).await.unwrap();
        assert_eq!(m.counts.triplets, 240);
        assert_eq!(m.counts.units, 2 * 3 * 3);
        assert_eq!(m.files[TRIPLETS_FILE], 240);
        let t: Vec<Triplet> = read_jsonl(dir.path().join(TRIPLETS_FILE)).unwrap();
        assert_eq!(t.len(), 240);
        assert_eq!(m.counts.triplets_per_facet["method"], 80);
        assert_eq!(m.stages["decompose"], "completed");
        let on_disk: RunManifest = crate::corpus::read_json(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(on_disk, m);
    }

    #[tokio::test]
    async fn labeled_input_skips_decomposition() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<Document> = (0..2)
            .map(|i| {
                Document::new(format!("t{i}"), "item").with_labels([
                    ("story", format!("story {i}")),
                    ("question", format!("question {i}")),
                    ("options", format!("options {i}")),
                ])
            })
            .collect();
        let p = Pipeline::new(PipelineConfig { schema: "education".into(), ..config() }).unwrap();
        let m = p.run(&items, dir.path(), false).await.unwrap();
        assert_eq!(m.stages["decompose"], "skipped: labeled");
        let units: Vec<FacetUnit> = read_jsonl(dir.path().join(UNITS_FILE)).unwrap();
        assert!(units.iter().all(|u| u.kind == UnitKind::Original));
    }

    #[tokio::test]
    async fn partial_failure_then_resume() {
        let dir = tempfile::tempdir().unwrap();
        let flaky = FnGenerator::new("mock-gen", |req| {
            if req.messages[0].content.contains("Background 1.") {
                Err(BackendError::Status { status: 400, body: "bad".into() })
            } else {
                Ok(MockGenerator::expected(req))
            }
        });
        let mut backends = BackendSet::mock(22, 2);
        backends.generator = Arc::new(flaky);
        let p = Pipeline::with_backends(config(), backends).unwrap();
        let err = p.run(&docs(3), dir.path(), false).await.unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(matches!(&err, Error::Partial { stage, completed: 2, total: 3, .. } if stage == "decompose"));
        let kept: Vec<FacetUnit> = read_jsonl(dir.path().join(UNITS_FILE)).unwrap();
        assert_eq!(kept.len(), 6);

        // A healthy backend finishes only the missing document.
        let healthy = Pipeline::with_backends(config(), BackendSet::mock(22, 2)).unwrap();
        let resumed = healthy.run(&docs(3), dir.path(), true).await.unwrap();
        let fresh_dir = tempfile::tempdir().unwrap();
        let fresh = healthy.run(&docs(3), fresh_dir.path(), false).await.unwrap();
        assert_eq!(resumed, fresh);
        for f in [UNITS_FILE, UNITS2_FILE, TRIPLETS_FILE] {
            assert_eq!(
                std::fs::read_to_string(dir.path().join(f)).unwrap(),
                std::fs::read_to_string(fresh_dir.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[tokio::test]
    async fn total_backend_failure_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let mut backends = BackendSet::mock(22, 2);
        backends.generator = Arc::new(FnGenerator::new("down", |_| {
            Err(BackendError::Transport("refused".into()))
        }));
        let p = Pipeline::with_backends(config(), backends).unwrap();
        assert_eq!(p.run(&docs(2), dir.path(), false).await.unwrap_err().exit_code(), 2);
    }

    #[tokio::test]
    async fn mining_and_split_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { mine: true, train_ratio: Some(0.9), ..config() };
        let m = Pipeline::new(cfg).unwrap().run(&docs(3), dir.path(), false).await.unwrap();
        let hn = m.files[HN_TRIPLETS_FILE];
        assert_eq!(m.files[TRAIN_FILE] + m.files[VAL_FILE], m.counts.triplets + hn);
        assert!(m.stages["mine"].starts_with("completed"));
        assert!(dir.path().join(MINING_REPORT_FILE).exists());
    }

    #[test]
    fn config_toml_round_trip_and_precedence() {
        let c = PipelineConfig::from_toml(
            "seed = 7\nmine = true\n[pairing]\nmode = \"sample_one\"\n[mining]\neasy_threshold = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.mining.easy_threshold, 0.2);
        assert_eq!(c.mining.hard_ceiling, 0.5);
        let e = c.clone().effective();
        assert_eq!(e.pairing.seed, Some(7));
        e.validate().unwrap();
        let text = toml::to_string(&e).unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), e);
        assert!(PipelineConfig::from_toml("sead = 1").is_err());
        assert_ne!(e.hash(), PipelineConfig { seed: 8, ..e.clone() }.hash());
    }
}
