use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use fable_core::benchbuild::{
    aggregate_annotations, annotator_agreement, build_pools, AnnotationRecord, CandidatePool,
};
use fable_core::corpus::{
    load_documents, read_json, read_jsonl, write_json, write_jsonl, Document, FacetUnit,
    RelevancePool, RunManifest,
};
use fable_core::decompose::StageContext;
use fable_core::evaluate::{compare_runs, evaluate_run, load_embeddings, EvalReport};
use fable_core::mine::Miner;
use fable_core::pipeline::{
    base_manifest, build_backends, run_decompose, run_synthesize, stage_error, Pipeline,
    PipelineConfig,
};
use fable_core::recompose::recompose_corpus;

use crate::{Cli, Command, Global};

#[derive(Args)]
pub struct BenchArgs {
    /// Items with facet labels (selection mode)
    #[arg(long)]
    items: Option<PathBuf>,
    #[arg(long)]
    facet: Option<String>,
    #[arg(long, default_value_t = 8)]
    queries: usize,
    #[arg(long, default_value_t = 80)]
    candidates: usize,
    /// Per-type query counts, e.g. `conversation=4,lecture=4`
    #[arg(long, value_delimiter = ',')]
    balance: Vec<String>,
    /// Candidate pools to label (annotation mode)
    #[arg(long)]
    candidate_pools: Option<PathBuf>,
    /// One ratings file per annotator
    #[arg(long, value_delimiter = ',')]
    annotations: Vec<PathBuf>,
    #[arg(long)]
    agreement_out: Option<PathBuf>,
    #[arg(long, default_value = "pools.jsonl")]
    out: PathBuf,
}

/// Parses a snake_case enum name through its serde representation.
fn parse_enum<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(json!(value))
        .map_err(|_| fable_core::Error::invalid(format!("unknown --{flag} value `{value}`")).into())
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(b) = &g.backend {
        c.backend = parse_enum("backend", b)?;
    }
    if let Some(n) = g.concurrency {
        c.concurrency = n;
    }
    Ok(c)
}

fn finalize(c: PipelineConfig) -> Result<PipelineConfig> {
    let c = c.effective();
    c.validate()?;
    Ok(c)
}

fn out_path(g: &Global, p: &Path) -> PathBuf {
    match &g.out_dir {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// `triplets.jsonl` -> `triplets.manifest.json`.
fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn write_records<T: Serialize>(manifest: &mut RunManifest, path: &Path, records: &[T]) -> Result<usize> {
    let n = write_jsonl(path, records)?;
    manifest.files.insert(file_name(path), n);
    Ok(n)
}

fn save_manifest(manifest: &RunManifest, out: &Path) -> Result<()> {
    write_json(manifest_path(out), manifest)?;
    Ok(())
}

pub async fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { input, schema, out } => {
            let mut c = load_config(g)?;
            if let Some(s) = schema {
                c.schema = s;
            }
            let c = finalize(c)?;
            let docs = load_documents(&input, &c.schema()?)?;
            let labeled = docs.iter().filter(|d| d.has_labels()).count();
            eprintln!("{}: {} documents, {labeled} with facet labels", input.display(), docs.len());
            if let Some(out) = out {
                let out = out_path(g, &out);
                let mut m = base_manifest(&c, &c.templates()?, None);
                m.counts.documents = docs.len();
                write_records(&mut m, &out, &docs)?;
                m.stages.insert("ingest".into(), "completed".into());
                save_manifest(&m, &out)?;
            }
        }
        Command::Decompose { input, schema, out, template_dir } => {
            let mut c = load_config(g)?;
            if let Some(s) = schema {
                c.schema = s;
            }
            if template_dir.is_some() {
                c.template_dir = template_dir;
            }
            let c = finalize(c)?;
            let p = Pipeline::new(c)?;
            let docs = load_documents(&input, &p.schema)?;
            let out = out_path(g, &out);
            let ctx = stage_ctx(&p);
            let stage = run_decompose(&ctx, &docs, &[]).await;
            let mut m = base_manifest(&p.config, &p.templates, Some(&p.backends));
            m.counts.documents = docs.len();
            m.counts.units = write_records(&mut m, &out, &stage.units)?;
            let status = stage_status(&docs, &stage.completed_docs, &p);
            m.stages.insert("decompose".into(), status);
            save_manifest(&m, &out)?;
            if !stage.is_complete() {
                return Err(stage_error("decompose", stage, docs.len(), "completed units were written; rerun on the remaining documents").into());
            }
            eprintln!("wrote {} units to {}", m.counts.units, out.display());
        }
        Command::Synthesize { units, docs, schema, out, variants, template_dir } => {
            let mut c = load_config(g)?;
            if let Some(s) = schema {
                c.schema = s;
            }
            if let Some(v) = variants {
                c.variants = v;
            }
            if template_dir.is_some() {
                c.template_dir = template_dir;
            }
            let p = Pipeline::new(finalize(c)?)?;
            let docs = load_documents(&docs, &p.schema)?;
            let anchors: Vec<FacetUnit> = read_jsonl(&units)?;
            let out = out_path(g, &out);
            let ctx = stage_ctx(&p);
            let stage = run_synthesize(&ctx, &docs, &anchors, p.config.variants, &[]).await;
            let mut m = base_manifest(&p.config, &p.templates, Some(&p.backends));
            m.counts.documents = docs.len();
            m.counts.units = write_records(&mut m, &out, &stage.units)?;
            m.stages.insert(
                "synthesize".into(),
                if stage.is_complete() { "completed".into() } else {
                    format!("failed: {} of {} documents completed", stage.completed_docs.len(), docs.len())
                },
            );
            save_manifest(&m, &out)?;
            if !stage.is_complete() {
                return Err(stage_error("synthesize", stage, docs.len(), "completed units were written; rerun on the remaining documents").into());
            }
            eprintln!("wrote {} units to {}", m.counts.units, out.display());
        }
        Command::Recompose { units, schema, mode, fraction, per_doc_cap, separator, out, pseudo_out } => {
            let mut c = load_config(g)?;
            if let Some(s) = schema {
                c.schema = s;
            }
            if let Some(mode) = mode {
                c.pairing.mode = parse_enum("mode", &mode)?;
            }
            if let Some(f) = fraction {
                c.pairing.subsample_fraction = f;
            }
            if per_doc_cap.is_some() {
                c.pairing.per_doc_cap = per_doc_cap;
            }
            if let Some(s) = separator {
                c.pairing.separator = s;
            }
            let c = finalize(c)?;
            let units: Vec<FacetUnit> = read_jsonl(&units)?;
            let r = recompose_corpus(&units, &c.schema()?, &c.pairing)?;
            let (out, pseudo_out) = (out_path(g, &out), out_path(g, &pseudo_out));
            let mut m = base_manifest(&c, &c.templates()?, None);
            m.counts.units = units.len();
            m.counts.documents = units.iter().map(|u| u.doc_id.as_str()).collect::<std::collections::BTreeSet<_>>().len();
            m.counts.pseudo_documents = write_records(&mut m, &pseudo_out, &r.pseudo_documents)?;
            m.counts.triplets = write_records(&mut m, &out, &r.triplets)?;
            m.counts.triplets_per_facet = r.triplets_per_facet();
            m.stages.insert("recompose".into(), "completed".into());
            save_manifest(&m, &out)?;
            eprintln!("wrote {} triplets to {}", m.counts.triplets, out.display());
        }
        Command::Mine { units, docs, schema, easy, ceiling, rounds, over_ceiling, out, report, units_out, pseudo_out, template_dir } => {
            let mut c = load_config(g)?;
            c.mine = true;
            if let Some(s) = schema {
                c.schema = s;
            }
            if let Some(e) = easy {
                c.mining.easy_threshold = e;
                c.mining.target_band.0 = e;
            }
            if let Some(h) = ceiling {
                c.mining.hard_ceiling = h;
                c.mining.target_band.1 = h;
            }
            if let Some(r) = rounds {
                c.mining.max_rounds = r;
            }
            if let Some(p) = over_ceiling {
                c.mining.over_ceiling_policy = parse_enum("over-ceiling", &p)?;
            }
            if template_dir.is_some() {
                c.template_dir = template_dir;
            }
            let p = Pipeline::new(finalize(c)?)?;
            let docs = load_documents(&docs, &p.schema)?;
            let units: Vec<FacetUnit> = read_jsonl(&units)?;
            let miner = Miner { ctx: stage_ctx(&p), scorer: &*p.backends.scorer, config: &p.config.mining };
            let mined = miner.run(&docs, &units).await?;
            let (out, report, units_out, pseudo_out) =
                (out_path(g, &out), out_path(g, &report), out_path(g, &units_out), out_path(g, &pseudo_out));
            let mut m = base_manifest(&p.config, &p.templates, Some(&p.backends));
            m.counts.documents = docs.len();
            m.counts.units = write_records(&mut m, &units_out, &mined.units)?;
            m.counts.pseudo_documents = write_records(&mut m, &pseudo_out, &mined.supplemental.pseudo_documents)?;
            m.counts.triplets = write_records(&mut m, &out, &mined.supplemental.triplets)?;
            m.counts.triplets_per_facet = mined.supplemental.triplets_per_facet();
            write_json(&report, &mined.report)?;
            let k = &mined.report.counts;
            m.stages.insert("mine".into(), format!("{} easy, {} accepted, {} rejected, {} failed", k.easy, k.accepted, k.rejected, k.failed));
            save_manifest(&m, &out)?;
            eprintln!("{} of {} easy negatives accepted; wrote {} triplets to {}", k.accepted, k.easy, m.counts.triplets, out.display());
            if let Some((unit, e)) = mined.failures.into_iter().next() {
                return Err(fable_core::Error::Partial {
                    stage: "mine".into(),
                    completed: k.regenerations - k.failed,
                    total: k.regenerations,
                    hint: format!("first failure at `{unit}`; accepted supplements were written"),
                    source: Box::new(e),
                }
                .into());
            }
        }
        Command::Evaluate { pools, embeddings, percents, gain, map_threshold, similarity, out } => {
            let mut c = load_config(g)?;
            if let Some(p) = percents {
                c.eval.ndcg_percents = p;
            }
            if let Some(gain) = gain {
                c.eval.gain = parse_enum("gain", &gain)?;
            }
            if let Some(t) = map_threshold {
                c.eval.map_threshold = t;
            }
            if let Some(s) = similarity {
                c.eval.similarity = parse_enum("similarity", &s)?;
            }
            let c = finalize(c)?;
            let pool_records: Vec<RelevancePool> = read_jsonl(&pools)?;
            let emb = load_embeddings(&embeddings)?;
            let mut r = evaluate_run(&pool_records, &emb, &c.eval)?;
            let out = out_path(g, &out);
            r.manifest = Some(file_name(&manifest_path(&out)));
            write_json(&out, &r)?;
            let mut m = base_manifest(&c, &c.templates()?, None);
            m.files.insert(file_name(&out), r.per_query.len());
            m.stages.insert("evaluate".into(), format!("{} queries", r.per_query.len()));
            save_manifest(&m, &out)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&json!({ "aggregated": r.aggregated, "per_facet": r.per_facet }))?);
        }
        Command::Compare { a, b, out } => {
            let ra: EvalReport = read_json(&a).with_context(|| format!("reading {}", a.display()))?;
            let rb: EvalReport = read_json(&b).with_context(|| format!("reading {}", b.display()))?;
            let cmp = compare_runs(&ra, &rb)?;
            match out {
                Some(out) => write_json(out_path(g, &out), &cmp)?,
                None => println!("{}", serde_json::to_string_pretty(&cmp)?),
            }
            for (k, v) in &cmp.non_decreasing {
                eprintln!("{k}: b >= a on {:.2}% of queries", v * 100.0);
            }
        }
        Command::Benchbuild(args) => benchbuild(g, args).await?,
        Command::Pipeline { input, schema, mode, mine, train_ratio, variants, template_dir, resume } => {
            let mut c = load_config(g)?;
            if let Some(s) = schema {
                c.schema = s;
            }
            if let Some(mode) = mode {
                c.pairing.mode = parse_enum("mode", &mode)?;
            }
            if mine {
                c.mine = true;
            }
            if train_ratio.is_some() {
                c.train_ratio = train_ratio;
            }
            if let Some(v) = variants {
                c.variants = v;
            }
            if template_dir.is_some() {
                c.template_dir = template_dir;
            }
            let p = Pipeline::new(finalize(c)?)?;
            let out_dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("fable-out"));
            let m = p.run_file(&input, &out_dir, resume).await?;
            eprintln!(
                "{} documents -> {} units, {} triplets in {}",
                m.counts.documents,
                m.counts.units,
                m.counts.triplets,
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn stage_ctx(p: &Pipeline) -> StageContext<'_> {
    StageContext {
        generator: &*p.backends.generator,
        schema: &p.schema,
        templates: &p.templates,
        settings: &p.config.generation,
        concurrency: p.backends.concurrency,
    }
}

fn stage_status(docs: &[Document], completed: &[String], p: &Pipeline) -> String {
    if completed.len() < docs.len() {
        return format!("failed: {} of {} documents completed", completed.len(), docs.len());
    }
    let labeled = docs.iter().all(|d| p.schema.facets.iter().all(|f| d.label(f).is_some()));
    if labeled { "skipped: labeled".into() } else { "completed".into() }
}

fn parse_balance(pairs: &[String]) -> Result<Option<BTreeMap<String, usize>>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut m = BTreeMap::new();
    for p in pairs {
        let Some((t, n)) = p.split_once('=') else {
            bail!(fable_core::Error::invalid(format!("balance entry `{p}` is not type=count")));
        };
        let n: usize = n
            .parse()
            .map_err(|_| fable_core::Error::invalid(format!("balance count `{n}` is not an integer")))?;
        m.insert(t.to_string(), n);
    }
    Ok(Some(m))
}

async fn benchbuild(g: &Global, a: BenchArgs) -> Result<()> {
    let c = finalize(load_config(g)?)?;
    let out = out_path(g, &a.out);
    let mut m = base_manifest(&c, &c.templates()?, None);
    if !a.annotations.is_empty() {
        let Some(cp) = &a.candidate_pools else {
            bail!(fable_core::Error::invalid("--annotations needs --candidate-pools"));
        };
        let pools: Vec<CandidatePool> = read_jsonl(cp)?;
        let annotators = a
            .annotations
            .iter()
            .map(read_jsonl::<AnnotationRecord>)
            .collect::<fable_core::Result<Vec<_>>>()?;
        let relevance = aggregate_annotations(&pools, &annotators)?;
        write_records(&mut m, &out, &relevance)?;
        if annotators.len() >= 2 {
            let agreement = annotator_agreement(&annotators)?;
            match &a.agreement_out {
                Some(p) => write_json(out_path(g, p), &agreement)?,
                None => println!("{}", serde_json::to_string_pretty(&agreement)?),
            }
        }
        m.stages.insert("benchbuild".into(), format!("aggregated {} annotators", annotators.len()));
        save_manifest(&m, &out)?;
        eprintln!("wrote {} relevance pools to {}", relevance.len(), out.display());
        return Ok(());
    }
    let (Some(items), Some(facet)) = (&a.items, &a.facet) else {
        bail!(fable_core::Error::invalid("selection mode needs --items and --facet"));
    };
    let items: Vec<Document> = read_jsonl(items)?;
    let balance = parse_balance(&a.balance)?;
    let backends = build_backends(&c)?;
    let (selection, mut pools) = build_pools(
        &items,
        facet,
        a.queries,
        a.candidates,
        balance.as_ref(),
        &*backends.scorer,
        backends.concurrency,
    )
    .await?;
    for p in &mut pools {
        p.meta.insert("query_dispersion".into(), json!(selection.dispersion[&p.query_id]));
    }
    m.backend_ids.insert("scorer".into(), backends.scorer.id().to_string());
    m.counts.documents = items.len();
    write_records(&mut m, &out, &pools)?;
    m.stages.insert(
        "benchbuild".into(),
        format!("{} queries, {} candidates each", pools.len(), pools.first().map_or(0, |p| p.candidates.len())),
    );
    save_manifest(&m, &out)?;
    eprintln!("wrote {} candidate pools to {}", pools.len(), out.display());
    Ok(())
}
