//! Benchmark construction: dispersion-based query selection, candidate
//! pools, annotation aggregation and inter-annotator agreement.
//!
//! An item's dispersion is the population standard deviation of its scores
//! against every other item of the same facet. High-dispersion items
//! separate close and distant neighbours well, which makes them good
//! queries and informative candidates.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::{ordered, Scorer};
use crate::corpus::{Document, RelevancePool, MAX_RELEVANCE};
use crate::{Error, Result};

/// Key of an item's type in `Document::meta`.
pub const TYPE_KEY: &str = "type";

/// Facet text of one item.
fn facet_text<'d>(item: &'d Document, facet: &str) -> Result<&'d str> {
    item.label(facet).ok_or_else(|| {
        Error::invalid(format!("item `{}` has no `{facet}` label", item.id))
    })
}

pub fn item_type(item: &Document) -> Option<&str> {
    item.meta.get(TYPE_KEY).and_then(|v| v.as_str())
}

/// Ordered-pair scores within one facet; `rows[i][j]` is
/// `score(text_i, text_j)` and the diagonal is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub facet: String,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn from_rows(facet: &str, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != ids.len() || rows.iter().any(|r| r.len() != ids.len()) {
            return Err(Error::invalid("score matrix must be square over the item ids"));
        }
        Ok(Self { facet: facet.to_string(), ids, rows })
    }

    /// Population standard deviation of each row, diagonal excluded.
    pub fn dispersion(&self) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let xs: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, x)| *x)
                    .collect();
                population_std(&xs)
            })
            .collect()
    }

    /// Indices by descending dispersion, ties by ascending id.
    fn ranked(&self) -> Vec<(usize, f64)> {
        let mut r: Vec<(usize, f64)> = self.dispersion().into_iter().enumerate().collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0])));
        r
    }
}

pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Scores every ordered pair of distinct items with bounded parallelism.
pub async fn score_matrix(
    items: &[Document],
    facet: &str,
    scorer: &dyn Scorer,
    concurrency: usize,
) -> Result<ScoreMatrix> {
    if items.len() < 2 {
        return Err(Error::invalid("need at least 2 items to build a score matrix"));
    }
    let texts = items
        .iter()
        .map(|d| facet_text(d, facet))
        .collect::<Result<Vec<_>>>()?;
    let n = items.len();
    let pairs = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
    let texts = &texts;
    let scores = ordered(pairs, concurrency, |(i, j)| async move {
        scorer.score(texts[i], texts[j]).await.map(|s| (i, j, s))
    })
    .await;
    let mut rows = vec![vec![0.0; n]; n];
    for r in scores {
        let (i, j, s) = r?;
        rows[i][j] = s;
    }
    ScoreMatrix::from_rows(facet, items.iter().map(|d| d.id.clone()).collect(), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySelection {
    pub facet: String,
    pub query_ids: Vec<String>,
    pub dispersion: BTreeMap<String, f64>,
}

/// Picks `k` items by descending dispersion, skipping duplicate facet
/// texts. With `type_balance`, each type contributes exactly its count.
pub fn select_queries(
    items: &[Document],
    matrix: &ScoreMatrix,
    k: usize,
    type_balance: Option<&BTreeMap<String, usize>>,
) -> Result<QuerySelection> {
    let facet = matrix.facet.as_str();
    if k == 0 {
        return Err(Error::invalid("at least one query is required"));
    }
    if items.len() < k {
        return Err(Error::invalid(format!(
            "{} items cannot supply {k} queries",
            items.len()
        )));
    }
    let by_id: HashMap<&str, &Document> = items.iter().map(|d| (d.id.as_str(), d)).collect();
    if let Some(b) = type_balance {
        let total: usize = b.values().sum();
        if total != k {
            return Err(Error::invalid(format!(
                "type balance sums to {total}, expected {k}"
            )));
        }
    }
    let mut quota = type_balance.cloned();
    let mut texts = HashSet::new();
    let mut chosen = Vec::with_capacity(k);
    let dispersion = matrix.dispersion();
    for (i, _) in matrix.ranked() {
        if chosen.len() == k {
            break;
        }
        let id = matrix.ids[i].as_str();
        let item = by_id
            .get(id)
            .ok_or_else(|| Error::MissingUnit(format!("item `{id}` not in the item set")))?;
        if let Some(q) = quota.as_mut() {
            match item_type(item).and_then(|t| q.get_mut(t)) {
                Some(left) if *left > 0 => *left -= 1,
                _ => continue,
            }
        }
        if !texts.insert(facet_text(item, facet)?) {
            // Give the quota back; a duplicate is not a selection.
            if let (Some(q), Some(t)) = (quota.as_mut(), item_type(item)) {
                *q.get_mut(t).unwrap() += 1;
            }
            continue;
        }
        chosen.push(id.to_string());
    }
    if let Some(q) = &quota {
        let short: Vec<String> = q
            .iter()
            .filter(|(_, left)| **left > 0)
            .map(|(t, left)| format!("{t} (short by {left})"))
            .collect();
        if !short.is_empty() {
            return Err(Error::invalid(format!(
                "not enough unique items per type: {}",
                short.join(", ")
            )));
        }
    }
    if chosen.len() < k {
        return Err(Error::invalid(format!(
            "only {} unique items available for {k} queries",
            chosen.len()
        )));
    }
    Ok(QuerySelection {
        facet: facet.to_string(),
        dispersion: chosen
            .iter()
            .map(|id| {
                let i = matrix.ids.iter().position(|x| x == id).unwrap();
                (id.clone(), dispersion[i])
            })
            .collect(),
        query_ids: chosen,
    })
}

/// Unannotated candidate list for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub facet: String,
    pub query_id: String,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

/// Top-`m` non-query items by dispersion (all of them when fewer remain),
/// one distinct facet text each. Every query of the facet shares the list.
pub fn select_candidates(
    items: &[Document],
    matrix: &ScoreMatrix,
    queries: &[String],
    m: usize,
) -> Result<Vec<CandidatePool>> {
    let facet = matrix.facet.as_str();
    if m == 0 {
        return Err(Error::invalid("candidate count must be >= 1"));
    }
    let by_id: HashMap<&str, &Document> = items.iter().map(|d| (d.id.as_str(), d)).collect();
    let excluded: HashSet<&str> = queries.iter().map(String::as_str).collect();
    for q in queries {
        if !matrix.ids.contains(q) {
            return Err(Error::MissingUnit(format!("query `{q}` not in the item set")));
        }
    }
    let mut texts = HashSet::new();
    let mut remaining = Vec::new();
    for (i, _) in matrix.ranked() {
        let id = matrix.ids[i].as_str();
        if excluded.contains(id) {
            continue;
        }
        let item = by_id
            .get(id)
            .ok_or_else(|| Error::MissingUnit(format!("item `{id}` not in the item set")))?;
        if texts.insert(facet_text(item, facet)?) {
            remaining.push(id.to_string());
        }
    }
    let saturated = m >= remaining.len();
    if saturated {
        tracing::warn!(facet, m, available = remaining.len(), "using all remaining items as candidates");
    }
    remaining.truncate(m);
    if remaining.is_empty() {
        return Err(Error::invalid(format!("no candidates left for facet `{facet}`")));
    }
    let meta = BTreeMap::from([
        ("dispersion_over".to_string(), json!("all_items")),
        ("requested".to_string(), json!(m)),
        ("saturated".to_string(), json!(saturated)),
    ]);
    Ok(queries
        .iter()
        .map(|q| CandidatePool {
            facet: facet.to_string(),
            query_id: q.clone(),
            candidates: remaining.clone(),
            meta: meta.clone(),
        })
        .collect())
}

/// Scores the matrix, then selects queries and candidates for one facet.
pub async fn build_pools(
    items: &[Document],
    facet: &str,
    k: usize,
    m: usize,
    type_balance: Option<&BTreeMap<String, usize>>,
    scorer: &dyn Scorer,
    concurrency: usize,
) -> Result<(QuerySelection, Vec<CandidatePool>)> {
    let matrix = score_matrix(items, facet, scorer, concurrency).await?;
    let selection = select_queries(items, &matrix, k, type_balance)?;
    let pools = select_candidates(items, &matrix, &selection.query_ids, m)?;
    Ok((selection, pools))
}

/// One annotator's rating of one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub doc_id: String,
    pub rating: u8,
}

fn annotator_map(records: &[AnnotationRecord]) -> Result<HashMap<(&str, &str), u8>> {
    let mut m = HashMap::with_capacity(records.len());
    for r in records {
        if r.rating > MAX_RELEVANCE {
            return Err(Error::invalid(format!(
                "rating {} for ({}, {}) outside 0-{MAX_RELEVANCE}",
                r.rating, r.query_id, r.doc_id
            )));
        }
        if m.insert((r.query_id.as_str(), r.doc_id.as_str()), r.rating).is_some() {
            return Err(Error::DuplicateId(format!("{}/{}", r.query_id, r.doc_id)));
        }
    }
    Ok(m)
}

/// Relevance pools whose labels are the half-up rounded mean of every
/// annotator's rating. Each annotator must rate every candidate.
pub fn aggregate_annotations(
    pools: &[CandidatePool],
    annotators: &[Vec<AnnotationRecord>],
) -> Result<Vec<RelevancePool>> {
    if annotators.is_empty() {
        return Err(Error::invalid("no annotator files"));
    }
    let maps = annotators
        .iter()
        .map(|a| annotator_map(a))
        .collect::<Result<Vec<_>>>()?;
    pools
        .iter()
        .map(|p| {
            let labels = maps
                .iter()
                .map(|m| {
                    p.candidates
                        .iter()
                        .filter_map(|c| {
                            m.get(&(p.query_id.as_str(), c.as_str())).map(|r| (c.clone(), *r))
                        })
                        .collect()
                })
                .collect();
            let mut pool = RelevancePool::from_annotators(&p.facet, &p.query_id, &p.candidates, labels)?;
            pool.meta = p.meta.clone();
            Ok(pool)
        })
        .collect()
}

/// Rank correlations between two labelings. `None` marks an undefined
/// statistic (a labeling with zero variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub n: usize,
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub pearson_r: Option<f64>,
}

/// Agreement over the ids both labelings share; the id sets must match.
pub fn agreement(a: &BTreeMap<String, u8>, b: &BTreeMap<String, u8>) -> Result<Agreement> {
    if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
        return Err(Error::invalid("labelings cover different id sets"));
    }
    for (k, v) in a.iter().chain(b) {
        if *v > MAX_RELEVANCE {
            return Err(Error::invalid(format!("label {v} for `{k}` outside 0-{MAX_RELEVANCE}")));
        }
    }
    let x: Vec<f64> = a.values().map(|v| f64::from(*v)).collect();
    let y: Vec<f64> = a.keys().map(|k| f64::from(b[k])).collect();
    agreement_values(&x, &y)
}

pub fn agreement_values(x: &[f64], y: &[f64]) -> Result<Agreement> {
    if x.len() != y.len() {
        return Err(Error::invalid("labelings differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("agreement needs at least 2 items"));
    }
    Ok(Agreement {
        n: x.len(),
        kendall_tau: kendall_tau_b(x, y),
        spearman_rho: pearson(&average_ranks(x), &average_ranks(y)),
        pearson_r: pearson(x, y),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Tie-corrected Kendall rank correlation.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut concordant, mut discordant, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    let n = x.len();
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            if dx == 0 {
                tx += 1;
            }
            if dy == 0 {
                ty += 1;
            }
            match dx * dy {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - tx) as f64) * ((n0 - ty) as f64);
    (denom > 0.0).then(|| ((concordant - discordant) as f64 / denom.sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise agreement between annotators over the (query, doc) pairs they
/// both rated, keyed `"i-j"` by annotator index.
pub fn annotator_agreement(annotators: &[Vec<AnnotationRecord>]) -> Result<BTreeMap<String, Agreement>> {
    let maps = annotators
        .iter()
        .map(|a| annotator_map(a))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            let mut keys: Vec<_> = maps[i].keys().filter(|k| maps[j].contains_key(*k)).collect();
            keys.sort();
            let x: Vec<f64> = keys.iter().map(|k| f64::from(maps[i][*k])).collect();
            let y: Vec<f64> = keys.iter().map(|k| f64::from(maps[j][*k])).collect();
            out.insert(format!("{i}-{j}"), agreement_values(&x, &y)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{FnScorer, MockScorer, ScorerFallback};
    use proptest::prelude::*;

    fn item(id: &str, facet: &str, text: &str, ty: Option<&str>) -> Document {
        let mut d = Document::new(id, format!("full {id}")).with_labels([(facet, text)]);
        if let Some(t) = ty {
            d.meta.insert(TYPE_KEY.into(), json!(t));
        }
        d
    }

    fn labels(v: &[u8]) -> BTreeMap<String, u8> {
        v.iter().enumerate().map(|(i, r)| (format!("i{i:02}"), *r)).collect()
    }

    #[test]
    fn agreement_identities() {
        let x = labels(&[0, 1, 2, 3, 1]);
        let a = agreement(&x, &x).unwrap();
        assert_eq!((a.kendall_tau, a.spearman_rho, a.pearson_r), (Some(1.0), Some(1.0), Some(1.0)));
        let r = agreement(&labels(&[0, 1, 2, 3]), &labels(&[3, 2, 1, 0])).unwrap();
        assert_eq!(r.kendall_tau, Some(-1.0));
        assert!((r.spearman_rho.unwrap() + 1.0).abs() < 1e-12);
        assert!((r.pearson_r.unwrap() + 1.0).abs() < 1e-12);
        let t = agreement(&labels(&[0, 1, 2, 3]), &labels(&[0, 2, 1, 3])).unwrap();
        assert!((t.kendall_tau.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let flat = agreement(&labels(&[1, 1, 1]), &labels(&[0, 1, 2])).unwrap();
        assert_eq!(flat, Agreement { n: 3, kendall_tau: None, spearman_rho: None, pearson_r: None });
        assert!(agreement(&labels(&[1]), &labels(&[1])).is_err());
        assert!(agreement(&labels(&[1, 2]), &labels(&[1, 2, 3])).is_err());
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[1.0, 0.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    proptest! {
        #[test]
        fn agreement_is_symmetric(v in prop::collection::vec((0u8..=3, 0u8..=3), 2..40)) {
            let a = labels(&v.iter().map(|p| p.0).collect::<Vec<_>>());
            let b = labels(&v.iter().map(|p| p.1).collect::<Vec<_>>());
            let (ab, ba) = (agreement(&a, &b).unwrap(), agreement(&b, &a).unwrap());
            let same = |x: Option<f64>, y: Option<f64>| match (x, y) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            };
            prop_assert!(same(ab.kendall_tau, ba.kendall_tau));
            prop_assert!(same(ab.spearman_rho, ba.spearman_rho));
            prop_assert!(same(ab.pearson_r, ba.pearson_r));
        }
    }

    /// Scores by a fixed per-item value: score(a, b) = |v_a - v_b|.
    fn by_value(values: &[(&str, f64)]) -> FnScorer<impl Fn(&str, &str) -> std::result::Result<f64, crate::backends::BackendError> + Send + Sync> {
        let m: HashMap<String, f64> = values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        FnScorer::new("value", move |a, b| Ok((m[a] - m[b]).abs()))
    }

    #[tokio::test]
    async fn widest_spread_first() {
        let items = vec![
            item("a", "q", "ta", None),
            item("b", "q", "tb", None),
            item("c", "q", "tc", None),
            item("x", "q", "tx", None),
        ];
        // x sits far from a cluster, so its scores are uniform while
        // cluster members see one large and two small scores.
        let scorer = by_value(&[("ta", 0.0), ("tb", 0.1), ("tc", 0.2), ("tx", 1.0)]);
        let m = score_matrix(&items, "q", &scorer, 3).await.unwrap();
        assert_eq!(m.rows[0][3], 1.0);
        let d = m.dispersion();
        let oracle = |xs: &[f64]| {
            let mu = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        assert!((d[0] - oracle(&[0.1, 0.2, 1.0])).abs() < 1e-12);
        let sel = select_queries(&items, &m, 1, None).unwrap();
        let best = (0..4).max_by(|&i, &j| d[i].total_cmp(&d[j])).unwrap();
        assert_eq!(sel.query_ids, vec![m.ids[best].clone()]);
        let all = select_queries(&items, &m, 4, None).unwrap();
        assert_eq!(all.query_ids.len(), 4);
    }

    #[tokio::test]
    async fn ties_break_by_id_and_texts_stay_unique() {
        let items = vec![
            item("b", "q", "same", None),
            item("a", "q", "same", None),
            item("c", "q", "other", None),
        ];
        let m = score_matrix(&items, "q", &MockScorer::new(ScorerFallback::Constant(0.5)), 2)
            .await
            .unwrap();
        let sel = select_queries(&items, &m, 2, None).unwrap();
        assert_eq!(sel.query_ids, vec!["a", "c"]);
        assert!(select_queries(&items, &m, 3, None).is_err());
    }

    #[tokio::test]
    async fn type_balance_quotas() {
        let mut items = Vec::new();
        for i in 0..10 {
            let ty = if i < 6 { "conversation" } else { "lecture" };
            items.push(item(&format!("t{i:02}"), "story", &format!("s{i}"), Some(ty)));
        }
        let values: Vec<(String, f64)> = (0..10).map(|i| (format!("s{i}"), (i * i) as f64 / 100.0)).collect();
        let refs: Vec<(&str, f64)> = values.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let scorer = by_value(&refs);
        let m = score_matrix(&items, "story", &scorer, 4).await.unwrap();
        let balance = BTreeMap::from([("conversation".to_string(), 2), ("lecture".to_string(), 2)]);
        let sel = select_queries(&items, &m, 4, Some(&balance)).unwrap();
        let by_id: HashMap<_, _> = items.iter().map(|d| (d.id.as_str(), d)).collect();
        let count = |t: &str| sel.query_ids.iter().filter(|q| item_type(by_id[q.as_str()]) == Some(t)).count();
        assert_eq!((count("conversation"), count("lecture")), (2, 2));
        let greedy = BTreeMap::from([("conversation".to_string(), 1), ("lecture".to_string(), 5)]);
        assert!(select_queries(&items, &m, 6, Some(&greedy)).is_err());
        let wrong_sum = BTreeMap::from([("lecture".to_string(), 1)]);
        assert!(select_queries(&items, &m, 4, Some(&wrong_sum)).is_err());

        let pools = select_candidates(&items, &m, &sel.query_ids, 3).unwrap();
        assert_eq!(pools.len(), 4);
        for p in &pools {
            assert_eq!(p.candidates.len(), 3);
            assert!(p.candidates.iter().all(|c| !sel.query_ids.contains(c)));
        }
        let all = select_candidates(&items, &m, &sel.query_ids, 100).unwrap();
        assert_eq!(all[0].candidates.len(), 6);
        assert_eq!(all[0].meta["saturated"], json!(true));
    }

    #[tokio::test]
    async fn one_query_of_twenty_four() {
        let items: Vec<_> = (0..24).map(|i| item(&format!("s{i:02}"), "story", &format!("story {i}"), None)).collect();
        let scorer = MockScorer::new(ScorerFallback::Hashed { seed: 3 });
        let (sel, pools) = build_pools(&items, "story", 1, 70, None, &scorer, 8).await.unwrap();
        assert_eq!(sel.query_ids.len(), 1);
        assert_eq!(pools[0].candidates.len(), 23);
    }

    #[test]
    fn annotations_aggregate_and_agree() {
        let pools = vec![CandidatePool {
            facet: "q".into(),
            query_id: "q1".into(),
            candidates: vec!["a".into(), "b".into()],
            meta: BTreeMap::new(),
        }];
        let rec = |d: &str, r| AnnotationRecord { query_id: "q1".into(), doc_id: d.into(), rating: r };
        let ann = vec![vec![rec("a", 1), rec("b", 3)], vec![rec("a", 2), rec("b", 0)]];
        let out = aggregate_annotations(&pools, &ann).unwrap();
        assert_eq!(out[0].relevance_of("a"), Some(2));
        assert_eq!(out[0].relevance_of("b"), Some(2));
        let ag = annotator_agreement(&ann).unwrap();
        assert_eq!(ag["0-1"].kendall_tau, Some(-1.0));
        let missing = vec![vec![rec("a", 1)]];
        assert!(aggregate_annotations(&pools, &missing).is_err());
        assert!(aggregate_annotations(&pools, &[vec![rec("a", 4), rec("b", 1)]]).is_err());
    }
}
