//! Ranking evaluation for faceted query-by-example runs.
//!
//! Each relevance pool is ranked by embedding similarity to its query and
//! scored with NDCG at percent-of-pool cutoffs and average precision.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, RelevancePool, MAX_RELEVANCE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    #[default]
    Linear,
    Exponential,
}

impl Gain {
    pub fn apply(self, r: u8) -> f64 {
        match self {
            Gain::Linear => f64::from(r),
            Gain::Exponential => 2f64.powi(i32::from(r)) - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    NegativeEuclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ndcg_percents: Vec<f64>,
    pub gain: Gain,
    pub map_threshold: u8,
    pub similarity: Similarity,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ndcg_percents: vec![0.10, 0.20],
            gain: Gain::Linear,
            map_threshold: 1,
            similarity: Similarity::Cosine,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ndcg_percents.is_empty() {
            return Err(Error::invalid("at least one NDCG percent is required"));
        }
        for &p in &self.ndcg_percents {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!("NDCG percent {p} outside (0, 1]")));
            }
        }
        if !(1..=MAX_RELEVANCE).contains(&self.map_threshold) {
            return Err(Error::invalid(format!(
                "MAP threshold {} outside 1..={MAX_RELEVANCE}",
                self.map_threshold
            )));
        }
        Ok(())
    }
}

/// `"ndcg_%20"` for 0.20, `"ndcg_%12.5"` for 0.125.
pub fn ndcg_key(percent: f64) -> String {
    let v = (percent * 100.0 * 1e6).round() / 1e6;
    format!("ndcg_%{v}")
}

pub const MAP_KEY: &str = "map";

/// Cutoff for a pool of `n` candidates: `max(1, round_half_up(p * n))`,
/// capped at `n`.
pub fn cutoff(percent: f64, n: usize) -> usize {
    // The epsilon absorbs products like 0.1 * 25 = 2.4999999999999996.
    let k = (percent * n as f64 + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, n.max(1))
}

pub fn dcg_at(relevances: &[u8], k: usize, gain: Gain) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain.apply(r) / ((i + 2) as f64).log2())
        .sum()
}

pub fn ideal_dcg_at(relevances: &[u8], k: usize, gain: Gain) -> f64 {
    let mut ideal = relevances.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    dcg_at(&ideal, k, gain)
}

fn check_relevances(relevances: &[u8]) -> Result<()> {
    match relevances.iter().find(|&&r| r > MAX_RELEVANCE) {
        Some(r) => Err(Error::invalid(format!("relevance {r} exceeds {MAX_RELEVANCE}"))),
        None => Ok(()),
    }
}

/// NDCG@K of a ranked relevance list. An all-zero list scores 0.
pub fn ndcg_at(relevances: &[u8], k: usize, gain: Gain) -> Result<f64> {
    check_relevances(relevances)?;
    if k < 1 || k > relevances.len() {
        return Err(Error::invalid(format!(
            "K = {k} outside 1..={}",
            relevances.len()
        )));
    }
    let ideal = ideal_dcg_at(relevances, k, gain);
    if ideal == 0.0 {
        tracing::warn!("NDCG over a pool with no relevant items is 0");
        return Ok(0.0);
    }
    Ok((dcg_at(relevances, k, gain) / ideal).min(1.0))
}

/// Mean of precision@i over the ranks `i` holding a relevant item, where
/// relevant means `r >= threshold`. No relevant items gives 0.
pub fn average_precision(relevances: &[u8], threshold: u8) -> Result<f64> {
    if relevances.is_empty() {
        return Err(Error::invalid("average precision of an empty ranking"));
    }
    check_relevances(relevances)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in relevances.iter().enumerate() {
        if r >= threshold {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        tracing::warn!("average precision over a pool with no relevant items is 0");
        return Ok(0.0);
    }
    Ok(sum / hits as f64)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

pub fn negative_euclidean(a: &[f64], b: &[f64]) -> f64 {
    -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub type Embeddings = HashMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Reads `{id, vector}` lines; ids unique, vectors finite and of one
/// dimension.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let records: Vec<EmbeddingRecord> = read_jsonl(path)?;
    let mut out = Embeddings::with_capacity(records.len());
    let mut dim = None;
    for (i, r) in records.into_iter().enumerate() {
        let bad = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if r.vector.is_empty() || r.vector.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("embedding `{}` is empty or non-finite", r.id)));
        }
        match dim {
            None => dim = Some(r.vector.len()),
            Some(d) if d != r.vector.len() => {
                return Err(bad(format!(
                    "embedding `{}` has dimension {}, expected {d}",
                    r.id,
                    r.vector.len()
                )))
            }
            _ => {}
        }
        if out.insert(r.id.clone(), r.vector).is_some() {
            return Err(Error::DuplicateId(r.id));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub doc_id: String,
    pub score: f64,
    pub relevance: u8,
}

fn lookup<'e>(embeddings: &'e Embeddings, id: &str) -> Result<&'e [f64]> {
    embeddings
        .get(id)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::CoverageGap(vec![id.to_string()]))
}

/// Candidates by descending similarity to the query, ties by ascending
/// doc id.
pub fn rank_pool(
    pool: &RelevancePool,
    embeddings: &Embeddings,
    similarity: Similarity,
) -> Result<Vec<RankedCandidate>> {
    let q = lookup(embeddings, &pool.query_id)?;
    let mut ranked = Vec::with_capacity(pool.candidates.len());
    for c in &pool.candidates {
        let v = lookup(embeddings, &c.doc_id)?;
        if v.len() != q.len() {
            return Err(Error::invalid(format!(
                "embedding `{}` has dimension {}, query `{}` has {}",
                c.doc_id,
                v.len(),
                pool.query_id,
                q.len()
            )));
        }
        let score = match similarity {
            Similarity::Cosine => cosine(q, v).ok_or_else(|| {
                Error::invalid(format!(
                    "zero-norm embedding in pool ({}, {})",
                    pool.facet, pool.query_id
                ))
            })?,
            Similarity::NegativeEuclidean => negative_euclidean(q, v),
        };
        ranked.push(RankedCandidate {
            doc_id: c.doc_id.clone(),
            score,
            relevance: c.relevance,
        });
    }
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub facet: String,
    pub query_id: String,
    /// Keyed like `ndcg_%20`.
    pub ndcg: BTreeMap<String, f64>,
    pub cutoffs: BTreeMap<String, usize>,
    pub average_precision: f64,
    pub ranked: Vec<RankedCandidate>,
}

impl QueryResult {
    /// NDCG values plus `map` (this query's AP).
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = self.ndcg.clone();
        m.insert(MAP_KEY.to_string(), self.average_precision);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub per_query: Vec<QueryResult>,
    pub per_facet: BTreeMap<String, BTreeMap<String, f64>>,
    /// Unweighted mean over every query of every facet.
    pub aggregated: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

fn mean_metrics<'q>(queries: impl Iterator<Item = &'q QueryResult>) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for q in queries {
        for (k, v) in q.metrics() {
            let e = sums.entry(k).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

pub fn evaluate_query(
    pool: &RelevancePool,
    embeddings: &Embeddings,
    config: &EvalConfig,
) -> Result<QueryResult> {
    if pool.candidates.is_empty() {
        return Err(Error::invalid(format!(
            "pool ({}, {}) has no candidates",
            pool.facet, pool.query_id
        )));
    }
    let ranked = rank_pool(pool, embeddings, config.similarity)?;
    let rels: Vec<u8> = ranked.iter().map(|c| c.relevance).collect();
    let mut ndcg = BTreeMap::new();
    let mut cutoffs = BTreeMap::new();
    for &p in &config.ndcg_percents {
        let k = cutoff(p, rels.len());
        ndcg.insert(ndcg_key(p), ndcg_at(&rels, k, config.gain)?);
        cutoffs.insert(ndcg_key(p), k);
    }
    Ok(QueryResult {
        facet: pool.facet.clone(),
        query_id: pool.query_id.clone(),
        ndcg,
        cutoffs,
        average_precision: average_precision(&rels, config.map_threshold)?,
        ranked,
    })
}

/// Every id the pools need that `embeddings` lacks, sorted.
pub fn missing_ids(pools: &[RelevancePool], embeddings: &Embeddings) -> Vec<String> {
    let mut missing = BTreeSet::new();
    for p in pools {
        for id in std::iter::once(&p.query_id).chain(p.candidates.iter().map(|c| &c.doc_id)) {
            if !embeddings.contains_key(id) {
                missing.insert(id.clone());
            }
        }
    }
    missing.into_iter().collect()
}

pub fn evaluate_run(
    pools: &[RelevancePool],
    embeddings: &Embeddings,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if pools.is_empty() {
        return Err(Error::invalid("no relevance pools to evaluate"));
    }
    let missing = missing_ids(pools, embeddings);
    if !missing.is_empty() {
        return Err(Error::CoverageGap(missing));
    }
    let mut seen = BTreeSet::new();
    let mut per_query = Vec::with_capacity(pools.len());
    let mut warnings = Vec::new();
    for pool in pools {
        pool.validate()?;
        if !seen.insert((pool.facet.as_str(), pool.query_id.as_str())) {
            return Err(Error::DuplicateId(format!("{}/{}", pool.facet, pool.query_id)));
        }
        if pool.candidates.iter().all(|c| c.relevance == 0) {
            warnings.push(format!(
                "pool ({}, {}) has no relevant candidates; NDCG and AP are 0",
                pool.facet, pool.query_id
            ));
        } else if pool.candidates.iter().all(|c| c.relevance < config.map_threshold) {
            warnings.push(format!(
                "pool ({}, {}) has no candidates at or above the MAP threshold; AP is 0",
                pool.facet, pool.query_id
            ));
        }
        per_query.push(evaluate_query(pool, embeddings, config)?);
    }
    let mut facets: Vec<&str> = Vec::new();
    for q in &per_query {
        if !facets.contains(&q.facet.as_str()) {
            facets.push(&q.facet);
        }
    }
    let per_facet = facets
        .iter()
        .map(|f| {
            (
                f.to_string(),
                mean_metrics(per_query.iter().filter(|q| q.facet == *f)),
            )
        })
        .collect();
    Ok(EvalReport {
        config: config.clone(),
        aggregated: mean_metrics(per_query.iter()),
        per_facet,
        per_query,
        warnings,
        manifest: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDelta {
    pub facet: String,
    pub query_id: String,
    /// `b - a` per metric.
    pub deltas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub per_query: Vec<QueryDelta>,
    /// Fraction of queries where run b scores at least run a.
    pub non_decreasing: BTreeMap<String, f64>,
    pub aggregated_delta: BTreeMap<String, f64>,
}

/// Per-query deltas between two reports over the same pools.
pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    let key = |q: &QueryResult| (q.facet.clone(), q.query_id.clone());
    let b_by: HashMap<_, _> = b.per_query.iter().map(|q| (key(q), q)).collect();
    if a.per_query.len() != b.per_query.len() || a.per_query.is_empty() {
        return Err(Error::invalid("reports cover different pools"));
    }
    let mut per_query = Vec::with_capacity(a.per_query.len());
    let mut wins: BTreeMap<String, usize> = BTreeMap::new();
    for qa in &a.per_query {
        let qb = b_by.get(&key(qa)).ok_or_else(|| {
            Error::invalid(format!(
                "query ({}, {}) missing from the second report",
                qa.facet, qa.query_id
            ))
        })?;
        let ids = |q: &QueryResult| q.ranked.iter().map(|c| c.doc_id.clone()).collect::<BTreeSet<_>>();
        if ids(qa) != ids(qb) {
            return Err(Error::invalid(format!(
                "query ({}, {}) has different candidates in the two reports",
                qa.facet, qa.query_id
            )));
        }
        let (ma, mb) = (qa.metrics(), qb.metrics());
        if ma.keys().ne(mb.keys()) {
            return Err(Error::invalid("reports use different metrics"));
        }
        let mut deltas = BTreeMap::new();
        for (k, va) in &ma {
            let vb = mb[k];
            deltas.insert(k.clone(), vb - va);
            *wins.entry(k.clone()).or_insert(0) += usize::from(vb >= *va);
        }
        per_query.push(QueryDelta {
            facet: qa.facet.clone(),
            query_id: qa.query_id.clone(),
            deltas,
        });
    }
    let n = per_query.len() as f64;
    Ok(Comparison {
        non_decreasing: wins.into_iter().map(|(k, w)| (k, w as f64 / n)).collect(),
        aggregated_delta: a
            .aggregated
            .iter()
            .filter_map(|(k, va)| b.aggregated.get(k).map(|vb| (k.clone(), vb - va)))
            .collect(),
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Candidate;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Exhaustive IDCG: best DCG over every permutation.
    fn brute_idcg(rels: &[u8], k: usize, gain: Gain) -> f64 {
        fn permute(v: &mut Vec<u8>, i: usize, k: usize, gain: Gain, best: &mut f64) {
            if i == v.len() {
                *best = best.max(dcg_at(v, k, gain));
                return;
            }
            for j in i..v.len() {
                v.swap(i, j);
                permute(v, i + 1, k, gain, best);
                v.swap(i, j);
            }
        }
        let mut best = 0.0;
        permute(&mut rels.to_vec(), 0, k, gain, &mut best);
        best
    }

    /// AP by definition: for every relevant rank, recount precision.
    fn brute_ap(rels: &[u8], t: u8) -> f64 {
        let relevant: Vec<usize> = (0..rels.len()).filter(|&i| rels[i] >= t).collect();
        if relevant.is_empty() {
            return 0.0;
        }
        relevant
            .iter()
            .map(|&i| (0..=i).filter(|&j| rels[j] >= t).count() as f64 / (i + 1) as f64)
            .sum::<f64>()
            / relevant.len() as f64
    }

    #[test]
    fn worked_values() {
        assert_eq!(ndcg_at(&[3, 2, 0], 3, Gain::Linear).unwrap(), 1.0);
        let v = ndcg_at(&[0, 3], 2, Gain::Linear).unwrap();
        assert!(close(v, (3.0 / 3f64.log2()) / 3.0, 1e-15));
        assert!(close(v, 0.6309, 1e-4));
        assert!(close(average_precision(&[1, 0, 1, 0], 1).unwrap(), (1.0 + 2.0 / 3.0) / 2.0, 1e-15));
        assert_eq!(average_precision(&[2, 1, 3], 1).unwrap(), 1.0);
        assert_eq!(average_precision(&[0, 0], 1).unwrap(), 0.0);
        assert_eq!(ndcg_at(&[0, 0, 0], 2, Gain::Linear).unwrap(), 0.0);
        assert!(average_precision(&[], 1).is_err());
        assert!(ndcg_at(&[1, 2], 0, Gain::Linear).is_err());
        assert!(ndcg_at(&[1, 2], 3, Gain::Linear).is_err());
        assert!(ndcg_at(&[4, 2], 1, Gain::Linear).is_err());
        // Exponential gain changes the ratio.
        let e = ndcg_at(&[1, 3], 2, Gain::Exponential).unwrap();
        assert!(close(e, (1.0 + 7.0 / 3f64.log2()) / (7.0 + 1.0 / 3f64.log2()), 1e-15));
    }

    #[test]
    fn cutoff_rule() {
        assert_eq!(cutoff(0.2, 50), 10);
        assert_eq!(cutoff(0.1, 23), 2);
        assert_eq!(cutoff(0.1, 3), 1);
        assert_eq!(cutoff(0.1, 25), 3);
        assert_eq!(cutoff(0.1, 15), 2);
        assert_eq!(cutoff(1.0, 7), 7);
        assert_eq!(ndcg_key(0.2), "ndcg_%20");
        assert_eq!(ndcg_key(0.1), "ndcg_%10");
        assert_eq!(ndcg_key(0.125), "ndcg_%12.5");
    }

    fn pool(facet: &str, q: &str, cands: &[(&str, u8)]) -> RelevancePool {
        RelevancePool {
            facet: facet.into(),
            query_id: q.into(),
            candidates: cands
                .iter()
                .map(|(d, r)| Candidate { doc_id: d.to_string(), relevance: *r })
                .collect(),
            annotator_labels: None,
            meta: Default::default(),
        }
    }

    fn emb(pairs: &[(&str, Vec<f64>)]) -> Embeddings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn ranking_order_and_ties() {
        let e = emb(&[
            ("q", vec![1.0, 0.0]),
            ("far", vec![0.1, (1.0f64 - 0.01).sqrt()]),
            ("near", vec![0.9, (1.0f64 - 0.81).sqrt()]),
            ("b", vec![0.5, 0.5]),
            ("a", vec![0.5, 0.5]),
        ]);
        let p = pool("f", "q", &[("far", 0), ("near", 3)]);
        let r = rank_pool(&p, &e, Similarity::Cosine).unwrap();
        assert_eq!(r[0].doc_id, "near");
        assert!(close(r[0].score, 0.9, 1e-12));
        let tie = pool("f", "q", &[("b", 1), ("a", 1)]);
        let r = rank_pool(&tie, &e, Similarity::Cosine).unwrap();
        assert_eq!((r[0].doc_id.as_str(), r[1].doc_id.as_str()), ("a", "b"));
        let r = rank_pool(&tie, &e, Similarity::NegativeEuclidean).unwrap();
        assert_eq!(r[0].doc_id, "a");
        let missing = pool("f", "q", &[("zzz", 1)]);
        assert!(matches!(rank_pool(&missing, &e, Similarity::Cosine), Err(Error::CoverageGap(_))));
        let mut bad = e.clone();
        bad.insert("short".into(), vec![1.0]);
        assert!(rank_pool(&pool("f", "q", &[("short", 1)]), &bad, Similarity::Cosine).is_err());
    }

    #[test]
    fn run_aggregates_over_queries() {
        let e = emb(&[
            ("q1", vec![1.0, 0.0]),
            ("q2", vec![0.0, 1.0]),
            ("x", vec![1.0, 0.1]),
            ("y", vec![0.1, 1.0]),
        ]);
        let pools = vec![
            pool("background", "q1", &[("x", 0), ("y", 2)]),
            pool("method", "q2", &[("x", 0), ("y", 2)]),
        ];
        let config = EvalConfig { ndcg_percents: vec![1.0], ..Default::default() };
        let r = evaluate_run(&pools, &e, &config).unwrap();
        let k = ndcg_key(1.0);
        let q1 = r.per_query[0].ndcg[&k];
        assert!(close(q1, (2.0 / 3f64.log2()) / 2.0, 1e-15));
        assert_eq!(r.per_query[1].ndcg[&k], 1.0);
        assert!(close(r.aggregated[&k], (q1 + 1.0) / 2.0, 1e-15));
        assert_eq!(r.per_facet["method"][&k], 1.0);
        assert_eq!(r, evaluate_run(&pools, &e, &config).unwrap());
        let gap = evaluate_run(&[pool("f", "q1", &[("nope", 1), ("x", 1)])], &e, &config);
        assert!(matches!(gap, Err(Error::CoverageGap(ids)) if ids == vec!["nope".to_string()]));
        let zero = evaluate_run(&[pool("f", "q1", &[("x", 0)])], &e, &config).unwrap();
        assert_eq!(zero.warnings.len(), 1);
    }

    #[test]
    fn comparison_fractions() {
        let e = emb(&[("q", vec![1.0, 0.0]), ("x", vec![1.0, 0.1]), ("y", vec![0.1, 1.0])]);
        let e2 = emb(&[("q", vec![0.0, 1.0]), ("x", vec![1.0, 0.1]), ("y", vec![0.1, 1.0])]);
        let pools = vec![pool("f", "q", &[("x", 0), ("y", 2)])];
        let config = EvalConfig::default();
        let a = evaluate_run(&pools, &e, &config).unwrap();
        let b = evaluate_run(&pools, &e2, &config).unwrap();
        let same = compare_runs(&a, &a).unwrap();
        assert!(same.non_decreasing.values().all(|v| *v == 1.0));
        let up = compare_runs(&a, &b).unwrap();
        assert!(up.non_decreasing.values().all(|v| *v == 1.0));
        let down = compare_runs(&b, &a).unwrap();
        assert!(down.non_decreasing.values().all(|v| *v == 0.0));
        let other = evaluate_run(&[pool("f", "x", &[("q", 1)])], &e, &config).unwrap();
        assert!(compare_runs(&a, &other).is_err());
    }

    #[test]
    fn seventeen_of_twenty_four() {
        let mk = |vals: &[f64]| EvalReport {
            config: EvalConfig::default(),
            per_query: vals
                .iter()
                .enumerate()
                .map(|(i, v)| QueryResult {
                    facet: "f".into(),
                    query_id: format!("q{i}"),
                    ndcg: BTreeMap::from([(ndcg_key(0.2), *v)]),
                    cutoffs: BTreeMap::new(),
                    average_precision: *v,
                    ranked: vec![],
                })
                .collect(),
            per_facet: BTreeMap::new(),
            aggregated: BTreeMap::new(),
            warnings: vec![],
            manifest: None,
        };
        let a = mk(&[0.5; 24]);
        let b: Vec<f64> = (0..24).map(|i| if i < 17 { 0.6 } else { 0.4 }).collect();
        let c = compare_runs(&a, &mk(&b)).unwrap();
        assert!(close(c.non_decreasing[MAP_KEY], 17.0 / 24.0, 1e-15));
        assert_eq!(format!("{:.2}", c.non_decreasing[MAP_KEY] * 100.0), "70.83");
    }

    fn rels(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..=3, 1..=max_len)
    }

    proptest! {
        #[test]
        fn ndcg_matches_exhaustive_ideal(r in rels(7), kf in 0.0f64..1.0, exp in any::<bool>()) {
            let gain = if exp { Gain::Exponential } else { Gain::Linear };
            let k = 1 + (kf * r.len() as f64) as usize % r.len();
            let ideal = brute_idcg(&r, k, gain);
            let expected = if ideal == 0.0 { 0.0 } else { dcg_at(&r, k, gain) / ideal };
            prop_assert!(close(ndcg_at(&r, k, gain).unwrap(), expected, 1e-12));
        }

        #[test]
        fn ap_matches_definition(r in rels(8), t in 1u8..=3) {
            prop_assert!(close(average_precision(&r, t).unwrap(), brute_ap(&r, t), 1e-12));
        }

        #[test]
        fn ideal_is_one_and_swaps_do_not_help(r in rels(12), i in 0usize..12, j in 0usize..12) {
            prop_assume!(r.iter().any(|&x| x > 0));
            let mut ideal = r.clone();
            ideal.sort_unstable_by(|a, b| b.cmp(a));
            for k in 1..=r.len() {
                prop_assert!(close(ndcg_at(&ideal, k, Gain::Linear).unwrap(), 1.0, 1e-12));
            }
            let (i, j) = (i % r.len(), j % r.len());
            let (hi, lo) = (i.min(j), i.max(j));
            let mut w = r.clone();
            if w[hi] < w[lo] { w.swap(hi, lo); }
            // Now w[hi] >= w[lo]; swapping puts the lower item first.
            let mut s = w.clone();
            s.swap(hi, lo);
            for k in lo + 1..=r.len() {
                prop_assert!(ndcg_at(&s, k, Gain::Linear).unwrap() <= ndcg_at(&w, k, Gain::Linear).unwrap() + 1e-12);
            }
        }

        #[test]
        fn cosine_ranking_ignores_positive_scale(
            vecs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 3..10),
            scales in prop::collection::vec(0.01f64..100.0, 10),
        ) {
            prop_assume!(vecs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)));
            let ids: Vec<String> = (0..vecs.len()).map(|i| format!("d{i}")).collect();
            let e: Embeddings = ids.iter().cloned().zip(vecs.iter().cloned()).collect();
            let scaled: Embeddings = ids
                .iter()
                .cloned()
                .zip(vecs.iter().zip(&scales).map(|(v, s)| v.iter().map(|x| x * s).collect()))
                .collect();
            let p = RelevancePool {
                facet: "f".into(),
                query_id: ids[0].clone(),
                candidates: ids[1..].iter().map(|d| Candidate { doc_id: d.clone(), relevance: 1 }).collect(),
                annotator_labels: None,
                meta: Default::default(),
            };
            let order = |e: &Embeddings| rank_pool(&p, e, Similarity::Cosine).unwrap()
                .into_iter().map(|c| c.doc_id).collect::<Vec<_>>();
            prop_assert_eq!(order(&e), order(&scaled));
        }

        #[test]
        fn ranking_is_a_permutation(n in 1usize..30, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::corpus::seeded_rng(seed, "perm");
            let mut e = Embeddings::new();
            e.insert("q".into(), (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
            let mut cands = Vec::new();
            for i in 0..n {
                e.insert(format!("c{i}"), (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
                cands.push(Candidate { doc_id: format!("c{i}"), relevance: rng.random_range(0..=3) });
            }
            let p = RelevancePool { facet: "f".into(), query_id: "q".into(), candidates: cands,
                annotator_labels: None, meta: Default::default() };
            let r = rank_pool(&p, &e, Similarity::Cosine).unwrap();
            let got: BTreeSet<_> = r.iter().map(|c| c.doc_id.clone()).collect();
            prop_assert_eq!(r.len(), n);
            prop_assert_eq!(got.len(), n);
            prop_assert!(r.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }

    #[test]
    fn embeddings_file_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        std::fs::write(&p, "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[0.5,1]}\n").unwrap();
        assert_eq!(load_embeddings(&p).unwrap()["b"], vec![0.5, 1.0]);
        std::fs::write(&p, "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1]}\n").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::MalformedRecord { line: 2, .. })));
        std::fs::write(&p, "{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[1]}\n").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::DuplicateId(_))));
    }
}
