//! Stage 3: facet-conditioned pseudo-documents and triplet assembly.
//!
//! For a target facet, every non-target slot independently takes the
//! similar or dissimilar component of its facet while the target slot is
//! fixed, giving `2^(n-1)` positives and as many negatives per document.
//! The anchor plus the positives form a pool of `2^(n-1) + 1` documents
//! whose unordered pairs are the (query, positive) pairs.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    seeded_rng, FacetSchema, FacetUnit, Polarity, PseudoDocument, Slot, Triplet, TripletMode,
    UnitKind,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    SampleOne,
    #[default]
    CrossAll,
    RandomNegative,
}

impl PairingMode {
    pub fn triplet_mode(self) -> TripletMode {
        match self {
            PairingMode::SampleOne => TripletMode::SampleOne,
            PairingMode::CrossAll => TripletMode::CrossAll,
            PairingMode::RandomNegative => TripletMode::RandomNegative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairingConfig {
    pub mode: PairingMode,
    pub seed: Option<u64>,
    pub subsample_fraction: f64,
    /// Keep at most this many triplets per document (seeded sample).
    pub per_doc_cap: Option<usize>,
    pub separator: String,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            mode: PairingMode::CrossAll,
            seed: None,
            subsample_fraction: 1.0,
            per_doc_cap: None,
            separator: " ".to_string(),
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "subsample fraction {} outside (0, 1]",
                self.subsample_fraction
            )));
        }
        let needs_seed = matches!(self.mode, PairingMode::SampleOne | PairingMode::RandomNegative)
            || self.subsample_fraction < 1.0
            || self.per_doc_cap.is_some();
        if needs_seed && self.seed.is_none() {
            return Err(Error::invalid(
                "a seed is required for sampling modes, subsampling, or per-document caps",
            ));
        }
        if self.per_doc_cap == Some(0) {
            return Err(Error::invalid("per-document cap must be >= 1"));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// One document's units, indexed by facet and kind.
#[derive(Debug, Clone)]
pub struct DocUnits<'a> {
    pub doc_id: &'a str,
    anchors: HashMap<&'a str, &'a FacetUnit>,
    similar: HashMap<(&'a str, u32), &'a FacetUnit>,
    dissimilar: HashMap<(&'a str, u32), &'a FacetUnit>,
    variants: u32,
}

impl<'a> DocUnits<'a> {
    /// Groups units by document in order of first appearance.
    pub fn group(units: &'a [FacetUnit]) -> Vec<DocUnits<'a>> {
        let mut order: Vec<&'a str> = Vec::new();
        let mut groups: HashMap<&'a str, DocUnits<'a>> = HashMap::new();
        for u in units {
            let g = groups.entry(u.doc_id.as_str()).or_insert_with(|| {
                order.push(u.doc_id.as_str());
                DocUnits {
                    doc_id: u.doc_id.as_str(),
                    anchors: HashMap::new(),
                    similar: HashMap::new(),
                    dissimilar: HashMap::new(),
                    variants: 0,
                }
            });
            match u.kind {
                UnitKind::Original | UnitKind::Summary => {
                    // Prefer a labeled original over a summary of the same facet.
                    let keep = g
                        .anchors
                        .get(u.facet.as_str())
                        .is_some_and(|prev| prev.kind == UnitKind::Original);
                    if !keep {
                        g.anchors.insert(u.facet.as_str(), u);
                    }
                }
                UnitKind::Similar => {
                    g.similar.insert((u.facet.as_str(), u.variant), u);
                    g.variants = g.variants.max(u.variant + 1);
                }
                UnitKind::Dissimilar => {
                    g.dissimilar.insert((u.facet.as_str(), u.variant), u);
                    g.variants = g.variants.max(u.variant + 1);
                }
                UnitKind::Regenerated => {}
            }
        }
        order.into_iter().map(|id| groups.remove(id).unwrap()).collect()
    }

    pub fn variants(&self) -> u32 {
        self.variants
    }

    pub fn anchor(&self, facet: &str) -> Result<&'a FacetUnit> {
        self.anchors.get(facet).copied().ok_or_else(|| {
            Error::MissingUnit(format!("no summary/original unit for ({}, {facet})", self.doc_id))
        })
    }

    pub fn component(&self, facet: &str, kind: UnitKind, variant: u32) -> Result<&'a FacetUnit> {
        let map = match kind {
            UnitKind::Similar => &self.similar,
            UnitKind::Dissimilar => &self.dissimilar,
            _ => return Err(Error::invalid(format!("{kind} is not a stage-2 component"))),
        };
        map.get(&(facet, variant)).copied().ok_or_else(|| {
            Error::MissingUnit(format!(
                "no {kind} unit (variant {variant}) for ({}, {facet})",
                self.doc_id
            ))
        })
    }
}

/// Builds pseudo-documents in schema order with a fixed separator.
#[derive(Debug, Clone)]
pub struct Recomposer<'a> {
    pub schema: &'a FacetSchema,
    pub separator: &'a str,
}

fn polarity_tag(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "pos",
        Polarity::Negative => "neg",
        Polarity::Anchor => "anchor",
    }
}

impl<'a> Recomposer<'a> {
    pub fn new(schema: &'a FacetSchema, separator: &'a str) -> Self {
        Self { schema, separator }
    }

    fn assemble(
        &self,
        id: String,
        doc_id: &str,
        target_facet: &str,
        polarity: Polarity,
        units: &[&FacetUnit],
    ) -> PseudoDocument {
        PseudoDocument {
            id,
            doc_id: doc_id.to_string(),
            composition: units
                .iter()
                .map(|u| Slot {
                    facet: u.facet.clone(),
                    unit_id: u.unit_id.clone(),
                })
                .collect(),
            target_facet: target_facet.to_string(),
            polarity,
            text: units
                .iter()
                .map(|u| u.text.as_str())
                .collect::<Vec<_>>()
                .join(self.separator),
        }
    }

    /// The document reconstructed from its own facet units.
    pub fn anchor(&self, doc: &DocUnits<'_>, target_facet: &str) -> Result<PseudoDocument> {
        self.schema.check_facet(target_facet)?;
        let units = self
            .schema
            .facets
            .iter()
            .map(|f| doc.anchor(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.assemble(
            format!("{}:{target_facet}:anchor", doc.doc_id),
            doc.doc_id,
            target_facet,
            Polarity::Anchor,
            &units,
        ))
    }

    /// All `2^(n-1)` compositions with `target_unit` fixed in its facet's
    /// slot. Bit `i` of the mask selects dissimilar for the `i`-th
    /// non-target facet, similar otherwise.
    pub fn compose_with_target(
        &self,
        doc: &DocUnits<'_>,
        target_unit: &FacetUnit,
        polarity: Polarity,
    ) -> Result<Vec<PseudoDocument>> {
        let target = target_unit.facet.as_str();
        self.schema.check_facet(target)?;
        let others: Vec<&str> = self
            .schema
            .facets
            .iter()
            .map(String::as_str)
            .filter(|f| *f != target)
            .collect();
        let n_masks = 1usize << others.len();
        let mut out = Vec::with_capacity(n_masks);
        for mask in 0..n_masks {
            let mut units = Vec::with_capacity(self.schema.len());
            for facet in &self.schema.facets {
                if facet == target {
                    units.push(target_unit);
                } else {
                    let bit = others.iter().position(|f| f == facet).unwrap();
                    let kind = if mask >> bit & 1 == 1 {
                        UnitKind::Dissimilar
                    } else {
                        UnitKind::Similar
                    };
                    units.push(doc.component(facet, kind, target_unit.variant)?);
                }
            }
            out.push(self.assemble(
                format!("{}:{}:{mask}", target_unit.unit_id, polarity_tag(polarity)),
                doc.doc_id,
                target,
                polarity,
                &units,
            ));
        }
        Ok(out)
    }

    /// Positives fix the similar component at the target facet, negatives
    /// the dissimilar one.
    pub fn enumerate_compositions(
        &self,
        doc: &DocUnits<'_>,
        target_facet: &str,
        polarity: Polarity,
        variant: u32,
    ) -> Result<Vec<PseudoDocument>> {
        let kind = match polarity {
            Polarity::Positive => UnitKind::Similar,
            Polarity::Negative => UnitKind::Dissimilar,
            Polarity::Anchor => {
                return Err(Error::invalid("use `anchor` for anchor pseudo-documents"))
            }
        };
        self.schema.check_facet(target_facet)?;
        // Every facet must have both components, not only those used here.
        for f in &self.schema.facets {
            doc.component(f, UnitKind::Similar, variant)?;
            doc.component(f, UnitKind::Dissimilar, variant)?;
        }
        let target_unit = doc.component(target_facet, kind, variant)?;
        self.compose_with_target(doc, target_unit, polarity)
    }

    /// Negative with a foreign document's anchor unit in the target slot and
    /// the document's own components (chosen by `mask`) elsewhere.
    fn foreign_negative(
        &self,
        doc: &DocUnits<'_>,
        foreign: &FacetUnit,
        variant: u32,
        mask: usize,
    ) -> Result<PseudoDocument> {
        let target = foreign.facet.as_str();
        let mut units = Vec::with_capacity(self.schema.len());
        let mut bit = 0;
        for facet in &self.schema.facets {
            if facet == target {
                units.push(foreign);
            } else {
                let kind = if mask >> bit & 1 == 1 {
                    UnitKind::Dissimilar
                } else {
                    UnitKind::Similar
                };
                units.push(doc.component(facet, kind, variant)?);
                bit += 1;
            }
        }
        Ok(self.assemble(
            format!("{}:{target}:rn:{variant}:{}:{mask}", doc.doc_id, foreign.unit_id),
            doc.doc_id,
            target,
            Polarity::Negative,
            &units,
        ))
    }
}

/// All unordered pairs over `{anchor} ∪ positives`, deduplicated by id.
/// The earlier member of each pair is the query.
pub fn build_query_positive_pairs<'p>(
    anchor: &'p PseudoDocument,
    positives: &'p [PseudoDocument],
) -> Result<Vec<(&'p PseudoDocument, &'p PseudoDocument)>> {
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(positives.len() + 1);
    for d in std::iter::once(anchor).chain(positives) {
        if d.target_facet != anchor.target_facet {
            return Err(Error::invalid(format!(
                "pseudo-document `{}` targets {}, expected {}",
                d.id, d.target_facet, anchor.target_facet
            )));
        }
        if seen.insert(d.id.as_str()) {
            pool.push(d);
        }
    }
    if pool.len() < 2 {
        return Err(Error::invalid("query/positive pool needs at least 2 documents"));
    }
    let mut pairs = Vec::with_capacity(pool.len() * (pool.len() - 1) / 2);
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            pairs.push((pool[i], pool[j]));
        }
    }
    Ok(pairs)
}

/// Triplets plus any pseudo-documents created while assembling them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembled {
    pub triplets: Vec<Triplet>,
    pub pseudo_documents: Vec<PseudoDocument>,
}

/// Source of negatives for one (document, facet).
pub enum Negatives<'n> {
    /// Pseudo-documents to pick from or cross with.
    Candidates(&'n [PseudoDocument]),
    /// Anchor units of other documents for the target facet, spliced into
    /// the document's own compositions.
    Foreign {
        recomposer: &'n Recomposer<'n>,
        doc: &'n DocUnits<'n>,
        variant: u32,
        pool: &'n [&'n FacetUnit],
    },
}

fn triplet(
    doc_id: &str,
    q: &PseudoDocument,
    p: &PseudoDocument,
    n: &PseudoDocument,
    mode: TripletMode,
) -> Triplet {
    Triplet {
        target_facet: q.target_facet.clone(),
        doc_id: doc_id.to_string(),
        query_ref: q.id.clone(),
        positive_ref: p.id.clone(),
        negative_ref: n.id.clone(),
        mode,
    }
}

/// Combines (query, positive) pairs with negatives.
///
/// - `cross_all`: every pair with every negative.
/// - `sample_one`: one uniformly drawn negative per pair.
/// - `random_negative`: per pair, a foreign document's anchor unit at the
///   target slot, with a uniformly drawn non-target composition.
pub fn assemble_triplets<R: Rng>(
    pairs: &[(&PseudoDocument, &PseudoDocument)],
    negatives: Negatives<'_>,
    mode: TripletMode,
    rng: &mut R,
) -> Result<Assembled> {
    let mut out = Assembled::default();
    let Some((first, _)) = pairs.first() else {
        return Ok(out);
    };
    let doc_id = first.doc_id.clone();
    match (mode, negatives) {
        (TripletMode::CrossAll | TripletMode::HardNegative, Negatives::Candidates(negs)) => {
            if negs.is_empty() {
                return Err(Error::invalid("empty negative pool"));
            }
            for (q, p) in pairs {
                for n in negs {
                    out.triplets.push(triplet(&doc_id, q, p, n, mode));
                }
            }
        }
        (TripletMode::SampleOne, Negatives::Candidates(negs)) => {
            if negs.is_empty() {
                return Err(Error::invalid("empty negative pool"));
            }
            for (q, p) in pairs {
                let n = negs.choose(rng).unwrap();
                out.triplets.push(triplet(&doc_id, q, p, n, mode));
            }
        }
        (
            TripletMode::RandomNegative,
            Negatives::Foreign {
                recomposer,
                doc,
                variant,
                pool,
            },
        ) => {
            let foreign: Vec<&FacetUnit> = pool
                .iter()
                .copied()
                .filter(|u| u.doc_id != doc.doc_id && u.facet == first.target_facet)
                .collect();
            if foreign.is_empty() {
                return Err(Error::invalid(
                    "random negatives need at least one other document in the corpus",
                ));
            }
            let n_masks = 1usize << (recomposer.schema.len() - 1);
            let mut made: HashMap<String, usize> = HashMap::new();
            for (q, p) in pairs {
                let unit = foreign.choose(rng).unwrap();
                let mask = rng.random_range(0..n_masks);
                let neg = recomposer.foreign_negative(doc, unit, variant, mask)?;
                out.triplets.push(triplet(&doc_id, q, p, &neg, mode));
                if !made.contains_key(&neg.id) {
                    made.insert(neg.id.clone(), out.pseudo_documents.len());
                    out.pseudo_documents.push(neg);
                }
            }
        }
        (mode, _) => {
            return Err(Error::invalid(format!(
                "negative source does not match triplet mode {mode:?}"
            )))
        }
    }
    Ok(out)
}

/// Seeded selection of `round(fraction * N)` items, in original order.
pub fn subsample_documents<T: Clone>(docs: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(docs.to_vec());
    }
    let keep = ((fraction * docs.len() as f64).round() as usize).min(docs.len());
    if keep == 0 {
        tracing::warn!(n = docs.len(), fraction, "subsample selected no documents");
    }
    let mut idx: Vec<usize> = (0..docs.len()).collect();
    idx.shuffle(&mut seeded_rng(seed, "subsample"));
    let mut chosen = idx[..keep].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| docs[i].clone()).collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecomposeOutput {
    pub pseudo_documents: Vec<PseudoDocument>,
    pub triplets: Vec<Triplet>,
}

impl RecomposeOutput {
    pub fn triplets_per_facet(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for t in &self.triplets {
            *m.entry(t.target_facet.clone()).or_insert(0) += 1;
        }
        m
    }
}

/// Stage 3 over a whole unit file. Output order: document, facet, variant,
/// pair, negative.
pub fn recompose_corpus(
    units: &[FacetUnit],
    schema: &FacetSchema,
    config: &PairingConfig,
) -> Result<RecomposeOutput> {
    config.validate()?;
    let groups = DocUnits::group(units);
    let ids: Vec<&str> = groups.iter().map(|g| g.doc_id).collect();
    let kept: HashSet<&str> = subsample_documents(&ids, config.subsample_fraction, config.seed())?
        .into_iter()
        .collect();
    let recomposer = Recomposer::new(schema, &config.separator);
    let anchors: Vec<&FacetUnit> = groups
        .iter()
        .flat_map(|g| schema.facets.iter().filter_map(|f| g.anchor(f).ok()))
        .collect();
    let mode = config.mode.triplet_mode();

    let mut out = RecomposeOutput::default();
    for doc in groups.iter().filter(|g| kept.contains(g.doc_id)) {
        if doc.variants() == 0 {
            return Err(Error::MissingUnit(format!(
                "document `{}` has no stage-2 units",
                doc.doc_id
            )));
        }
        let mut doc_triplets = Vec::new();
        for facet in &schema.facets {
            for variant in 0..doc.variants() {
                let anchor = recomposer.anchor(doc, facet)?;
                let positives =
                    recomposer.enumerate_compositions(doc, facet, Polarity::Positive, variant)?;
                let negatives =
                    recomposer.enumerate_compositions(doc, facet, Polarity::Negative, variant)?;
                let pairs = build_query_positive_pairs(&anchor, &positives)?;
                let mut rng = seeded_rng(
                    config.seed(),
                    &format!("recompose:{}:{facet}:{variant}", doc.doc_id),
                );
                let source = match config.mode {
                    PairingMode::RandomNegative => Negatives::Foreign {
                        recomposer: &recomposer,
                        doc,
                        variant,
                        pool: &anchors,
                    },
                    _ => Negatives::Candidates(&negatives),
                };
                let assembled = assemble_triplets(&pairs, source, mode, &mut rng)?;
                doc_triplets.extend(assembled.triplets);
                out.pseudo_documents.push(anchor);
                out.pseudo_documents.extend(positives);
                out.pseudo_documents.extend(negatives);
                out.pseudo_documents.extend(assembled.pseudo_documents);
            }
        }
        if let Some(cap) = config.per_doc_cap {
            doc_triplets = cap_sample(doc_triplets, cap, config.seed(), doc.doc_id);
        }
        out.triplets.extend(doc_triplets);
    }
    Ok(out)
}

fn cap_sample(items: Vec<Triplet>, cap: usize, seed: u64, doc_id: &str) -> Vec<Triplet> {
    if items.len() <= cap {
        return items;
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut seeded_rng(seed, &format!("cap:{doc_id}")));
    let mut keep = idx[..cap].to_vec();
    keep.sort_unstable();
    let mut items: Vec<Option<Triplet>> = items.into_iter().map(Some).collect();
    keep.into_iter().map(|i| items[i].take().unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Provenance;

    pub(crate) fn unit(doc: &str, facet: &str, kind: UnitKind) -> FacetUnit {
        FacetUnit {
            unit_id: crate::decompose::unit_id(doc, facet, kind, 0),
            doc_id: doc.to_string(),
            facet: facet.to_string(),
            kind,
            text: format!("{doc}-{facet}-{kind}"),
            score: None,
            provenance: Provenance {
                backend_id: "t".into(),
                prompt_hash: "h".into(),
                mining_round: 0,
                conditioned_on: None,
                parent: None,
            },
            variant: 0,
            flags: vec![],
        }
    }

    fn doc_units(schema: &FacetSchema, doc: &str) -> Vec<FacetUnit> {
        schema
            .facets
            .iter()
            .flat_map(|f| {
                [UnitKind::Summary, UnitKind::Similar, UnitKind::Dissimilar]
                    .map(|k| unit(doc, f, k))
            })
            .collect()
    }

    fn schema_n(n: usize) -> FacetSchema {
        FacetSchema::new("t", (0..n).map(|i| format!("f{i}"))).unwrap()
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn three_facets_give_four_each_way() {
        let schema = FacetSchema::scientific();
        let units = doc_units(&schema, "d1");
        let groups = DocUnits::group(&units);
        let r = Recomposer::new(&schema, " ");
        let pos = r.enumerate_compositions(&groups[0], "method", Polarity::Positive, 0).unwrap();
        let neg = r.enumerate_compositions(&groups[0], "method", Polarity::Negative, 0).unwrap();
        assert_eq!((pos.len(), neg.len()), (4, 4));
        for p in &pos {
            assert_eq!(p.target_unit(), "d1:method:similar:0");
            let facets: Vec<_> = p.composition.iter().map(|s| s.facet.as_str()).collect();
            assert_eq!(facets, schema.facets);
        }
        // Exhaustive: the four non-target selections are all distinct.
        let picks: HashSet<_> = pos
            .iter()
            .map(|p| (p.unit_at("background").unwrap(), p.unit_at("result").unwrap()))
            .collect();
        assert_eq!(picks.len(), 4);
        // Same mask, opposite polarity: only the target slot differs.
        for (p, n) in pos.iter().zip(&neg) {
            let diff: Vec<_> = p
                .composition
                .iter()
                .zip(&n.composition)
                .filter(|(a, b)| a.unit_id != b.unit_id)
                .map(|(a, _)| a.facet.as_str())
                .collect();
            assert_eq!(diff, vec!["method"]);
        }
        assert_eq!(
            pos[0].text,
            "d1-background-similar d1-method-similar d1-result-similar"
        );
    }

    #[test]
    fn two_facets_negative() {
        let schema = schema_n(2);
        let units = doc_units(&schema, "d");
        let g = DocUnits::group(&units);
        let neg = Recomposer::new(&schema, " ")
            .enumerate_compositions(&g[0], "f1", Polarity::Negative, 0)
            .unwrap();
        assert_eq!(neg.len(), 2);
    }

    #[test]
    fn count_law_for_small_schemas() {
        for n in 2..=4 {
            let schema = schema_n(n);
            let units = doc_units(&schema, "d");
            let g = DocUnits::group(&units);
            let r = Recomposer::new(&schema, " ");
            let target = &schema.facets[n - 1];
            let anchor = r.anchor(&g[0], target).unwrap();
            let pos = r.enumerate_compositions(&g[0], target, Polarity::Positive, 0).unwrap();
            let neg = r.enumerate_compositions(&g[0], target, Polarity::Negative, 0).unwrap();
            let half = 1 << (n - 1);
            assert_eq!(pos.len(), half);
            assert_eq!(neg.len(), half);
            let pairs = build_query_positive_pairs(&anchor, &pos).unwrap();
            assert_eq!(pairs.len(), binom(half + 1, 2));
            let mut rng = seeded_rng(0, "t");
            let all = assemble_triplets(&pairs, Negatives::Candidates(&neg), TripletMode::CrossAll, &mut rng)
                .unwrap();
            assert_eq!(all.triplets.len(), binom(half + 1, 2) * half);
        }
    }

    #[test]
    fn pairs_are_unordered_and_unique() {
        let schema = FacetSchema::scientific();
        let units = doc_units(&schema, "d");
        let g = DocUnits::group(&units);
        let r = Recomposer::new(&schema, " ");
        let anchor = r.anchor(&g[0], "result").unwrap();
        let mut pos = r.enumerate_compositions(&g[0], "result", Polarity::Positive, 0).unwrap();
        pos.push(pos[0].clone());
        let pairs = build_query_positive_pairs(&anchor, &pos).unwrap();
        assert_eq!(pairs.len(), 10);
        let mut seen = HashSet::new();
        for (a, b) in &pairs {
            assert_ne!(a.id, b.id);
            let key = if a.id < b.id { (&a.id, &b.id) } else { (&b.id, &a.id) };
            assert!(seen.insert(key));
        }
        assert!(build_query_positive_pairs(&anchor, &[]).is_err());
        let schema2 = schema_n(2);
        let u2 = doc_units(&schema2, "d");
        let g2 = DocUnits::group(&u2);
        let r2 = Recomposer::new(&schema2, " ");
        let a2 = r2.anchor(&g2[0], "f0").unwrap();
        let p2 = r2.enumerate_compositions(&g2[0], "f0", Polarity::Positive, 0).unwrap();
        assert_eq!(build_query_positive_pairs(&a2, &p2).unwrap().len(), 3);
    }

    #[test]
    fn missing_component_is_an_error() {
        let schema = FacetSchema::scientific();
        let units: Vec<_> = doc_units(&schema, "d")
            .into_iter()
            .filter(|u| !(u.facet == "result" && u.kind == UnitKind::Dissimilar))
            .collect();
        let g = DocUnits::group(&units);
        let err = Recomposer::new(&schema, " ")
            .enumerate_compositions(&g[0], "method", Polarity::Positive, 0)
            .unwrap_err();
        assert!(matches!(err, Error::MissingUnit(_)));
    }

    #[test]
    fn sample_one_is_reproducible() {
        let schema = FacetSchema::scientific();
        let units: Vec<_> = ["a", "b"].iter().flat_map(|d| doc_units(&schema, d)).collect();
        let config = PairingConfig {
            mode: PairingMode::SampleOne,
            seed: Some(22),
            ..Default::default()
        };
        let a = recompose_corpus(&units, &schema, &config).unwrap();
        assert_eq!(a.triplets.len(), 2 * 3 * 10);
        assert_eq!(a, recompose_corpus(&units, &schema, &config).unwrap());
        assert!(a.triplets.iter().all(|t| t.mode == TripletMode::SampleOne));
        let other = recompose_corpus(
            &units,
            &schema,
            &PairingConfig {
                seed: Some(2222),
                ..config.clone()
            },
        )
        .unwrap();
        assert_ne!(a.triplets, other.triplets);
        assert!(recompose_corpus(&units, &schema, &PairingConfig { seed: None, ..config }).is_err());
    }

    #[test]
    fn random_negative_uses_foreign_anchor_units() {
        let schema = FacetSchema::scientific();
        let units: Vec<_> = ["a", "b", "c"].iter().flat_map(|d| doc_units(&schema, d)).collect();
        let config = PairingConfig {
            mode: PairingMode::RandomNegative,
            seed: Some(7),
            ..Default::default()
        };
        let out = recompose_corpus(&units, &schema, &config).unwrap();
        let by_id: HashMap<_, _> = out.pseudo_documents.iter().map(|p| (p.id.as_str(), p)).collect();
        let unit_by_id: HashMap<_, _> = units.iter().map(|u| (u.unit_id.as_str(), u)).collect();
        assert_eq!(out.triplets.len(), 3 * 3 * 10);
        for t in &out.triplets {
            let neg = by_id[t.negative_ref.as_str()];
            let target = unit_by_id[neg.target_unit()];
            assert_eq!(target.kind, UnitKind::Summary);
            assert_ne!(target.doc_id, t.doc_id);
            assert_eq!(target.facet, t.target_facet);
            // Everything else is the document's own.
            for s in neg.composition.iter().filter(|s| s.facet != t.target_facet) {
                assert_eq!(unit_by_id[s.unit_id.as_str()].doc_id, t.doc_id);
            }
        }
        let single = doc_units(&schema, "solo");
        assert!(recompose_corpus(&single, &schema, &config).is_err());
    }

    #[test]
    fn subsample_rules() {
        let docs: Vec<u32> = (0..1000).collect();
        let half = subsample_documents(&docs, 0.5, 22).unwrap();
        assert_eq!(half.len(), 500);
        assert_eq!(half, subsample_documents(&docs, 0.5, 22).unwrap());
        assert!(half.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_documents(&docs, 1.0, 22).unwrap(), docs);
        assert!(subsample_documents(&[1, 2], 0.1, 1).unwrap().is_empty());
        assert!(subsample_documents(&docs, 0.0, 1).is_err());
        assert!(subsample_documents(&docs, 1.5, 1).is_err());
    }

    #[test]
    fn per_doc_cap_matches_corpus_accounting() {
        let schema = FacetSchema::scientific();
        let units: Vec<_> = ["a", "b"].iter().flat_map(|d| doc_units(&schema, d)).collect();
        let config = PairingConfig {
            seed: Some(22),
            per_doc_cap: Some(40),
            ..Default::default()
        };
        let out = recompose_corpus(&units, &schema, &config).unwrap();
        assert_eq!(out.triplets.len(), 80);
        assert_eq!(out.triplets.iter().filter(|t| t.doc_id == "a").count(), 40);
    }

    #[test]
    fn labeled_originals_anchor_the_pool() {
        let schema = FacetSchema::education();
        let mut units = doc_units(&schema, "t");
        units.push(unit("t", "question", UnitKind::Original));
        let g = DocUnits::group(&units);
        let anchor = Recomposer::new(&schema, " ").anchor(&g[0], "story").unwrap();
        assert_eq!(anchor.unit_at("question"), Some("t:question:original"));
        assert_eq!(anchor.unit_at("story"), Some("t:story:summary"));
        assert_eq!(anchor.polarity, Polarity::Anchor);
    }
}
