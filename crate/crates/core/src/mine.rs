//! Hard-negative mining.
//!
//! Negatives are scored against their facet's anchor unit. Those below the
//! easy threshold are regenerated toward the target band and rescored;
//! regenerated units below the hard ceiling become hard negatives and are
//! recomposed into supplemental triplets.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::backends::{ordered, Scorer};
use crate::corpus::{
    seeded_rng, Document, FacetSchema, FacetUnit, Polarity, PseudoDocument, Triplet, TripletMode,
    UnitKind,
};
use crate::decompose::StageContext;
use crate::recompose::{
    assemble_triplets, build_query_positive_pairs, DocUnits, Negatives, PairingMode,
    RecomposeOutput, Recomposer,
};
use crate::{Error, Result};

pub const STILL_EASY_FLAG: &str = "still_easy";
pub const OVER_CEILING_FLAG: &str = "over_ceiling";
pub const REJECTED_FLAG: &str = "rejected";
pub const HARD_NEGATIVE_FLAG: &str = "hard_negative";

/// Observed mean score of regenerated negatives with a real scorer. Kept in
/// reports for comparison only.
pub const REFERENCE_POST_MEAN: f64 = 0.75;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverCeilingPolicy {
    #[default]
    KeepWarn,
    Drop,
}

/// What happens to a regenerated unit still below the easy threshold after
/// the last round. Base triplets with the original negative are kept either
/// way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StillEasyPolicy {
    #[default]
    AcceptFlagged,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub easy_threshold: f64,
    pub hard_ceiling: f64,
    pub target_band: (f64, f64),
    pub max_rounds: u32,
    pub over_ceiling_policy: OverCeilingPolicy,
    pub still_easy_policy: StillEasyPolicy,
    /// `cross_all` or `sample_one`; supplements always carry
    /// `mode = hard_negative`.
    pub supplement_pairing: PairingMode,
    pub seed: Option<u64>,
    pub separator: String,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            easy_threshold: 0.25,
            hard_ceiling: 0.5,
            target_band: (0.25, 0.5),
            max_rounds: 1,
            over_ceiling_policy: OverCeilingPolicy::KeepWarn,
            still_easy_policy: StillEasyPolicy::AcceptFlagged,
            supplement_pairing: PairingMode::CrossAll,
            seed: None,
            separator: " ".to_string(),
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        let (e, h) = (self.easy_threshold, self.hard_ceiling);
        if !(0.0 <= e && e < h && h <= 1.0) {
            return Err(Error::invalid(format!(
                "thresholds must satisfy 0 <= easy ({e}) < ceiling ({h}) <= 1"
            )));
        }
        let (lo, hi) = self.target_band;
        if !(e <= lo && lo < hi && hi <= h) {
            return Err(Error::invalid(format!(
                "target band ({lo}, {hi}) must lie within [{e}, {h}]"
            )));
        }
        if self.max_rounds < 1 {
            return Err(Error::invalid("max_rounds must be >= 1"));
        }
        match self.supplement_pairing {
            PairingMode::CrossAll => {}
            PairingMode::SampleOne if self.seed.is_some() => {}
            PairingMode::SampleOne => {
                return Err(Error::invalid("sample_one supplements need a seed"))
            }
            PairingMode::RandomNegative => {
                return Err(Error::invalid(
                    "supplements pair with regenerated units, not random negatives",
                ))
            }
        }
        Ok(())
    }
}

type Key<'u> = (&'u str, &'u str);

fn anchor_index(units: &[FacetUnit]) -> HashMap<Key<'_>, &FacetUnit> {
    let mut idx: HashMap<Key<'_>, &FacetUnit> = HashMap::new();
    for u in units.iter().filter(|u| u.kind.is_anchor()) {
        let key = (u.doc_id.as_str(), u.facet.as_str());
        // A labeled original wins over a summary.
        if idx.get(&key).is_none_or(|prev| prev.kind != UnitKind::Original) {
            idx.insert(key, u);
        }
    }
    idx
}

fn counterpart<'u>(idx: &HashMap<Key<'_>, &'u FacetUnit>, u: &FacetUnit) -> Result<&'u FacetUnit> {
    idx.get(&(u.doc_id.as_str(), u.facet.as_str()))
        .copied()
        .ok_or_else(|| {
            Error::MissingUnit(format!(
                "no summary/original for ({}, {}) to score `{}` against",
                u.doc_id, u.facet, u.unit_id
            ))
        })
}

/// Scores every dissimilar and regenerated unit against its anchor unit.
/// Returns all input units in order; other kinds pass through unchanged.
pub async fn score_negatives(
    units: &[FacetUnit],
    scorer: &dyn Scorer,
    concurrency: usize,
) -> Result<Vec<FacetUnit>> {
    let idx = anchor_index(units);
    let mut jobs = Vec::new();
    for (i, u) in units.iter().enumerate() {
        if u.kind.is_negative() {
            jobs.push((i, counterpart(&idx, u)?.text.as_str(), u.text.as_str()));
        }
    }
    let scores = ordered(jobs, concurrency, |(i, a, b)| async move {
        scorer.score(a, b).await.map(|s| (i, s))
    })
    .await;
    let mut out = units.to_vec();
    for r in scores {
        let (i, s) = r?;
        out[i].score = Some(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Classified<'u> {
    pub easy: Vec<&'u FacetUnit>,
    pub retained: Vec<&'u FacetUnit>,
    pub over_ceiling: Vec<&'u FacetUnit>,
}

fn score_of(u: &FacetUnit) -> Result<f64> {
    u.score
        .ok_or_else(|| Error::invalid(format!("unit `{}` has not been scored", u.unit_id)))
}

/// Partitions negative units with strict-less comparisons at both
/// thresholds. Anchor and similar units are ignored.
pub fn classify<'u>(units: &'u [FacetUnit], config: &MiningConfig) -> Result<Classified<'u>> {
    let mut c = Classified::default();
    for u in units.iter().filter(|u| u.kind.is_negative()) {
        let s = score_of(u)?;
        if s < config.easy_threshold {
            c.easy.push(u);
        } else if s < config.hard_ceiling {
            c.retained.push(u);
        } else {
            c.over_ceiling.push(u);
        }
    }
    Ok(c)
}

/// Count, mean and a 10-bin histogram over `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub histogram: [usize; 10],
}

impl ScoreSummary {
    pub fn of(scores: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::default();
        let mut sum = 0.0;
        for x in scores {
            s.count += 1;
            sum += x;
            let bin = ((x * 10.0).floor() as isize).clamp(0, 9) as usize;
            s.histogram[bin] += 1;
        }
        if s.count > 0 {
            s.mean = Some(sum / s.count as f64);
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: u32,
    pub regenerated: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub still_easy: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiningCounts {
    pub negatives: usize,
    pub easy: usize,
    pub retained: usize,
    pub over_ceiling: usize,
    pub dropped: usize,
    pub regenerations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub still_easy: usize,
    pub failed: usize,
    pub supplemental_triplets: usize,
}

/// Score distribution before and after mining.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreShiftReport {
    /// All initial negatives.
    pub before: ScoreSummary,
    /// Initial scores of the easy negatives only.
    pub easy_before: ScoreSummary,
    /// Final scores of every regenerated unit.
    pub regenerated: ScoreSummary,
    /// Negatives after mining: accepted units replace their easy origin.
    pub after: ScoreSummary,
    pub counts: MiningCounts,
    pub rounds: Vec<RoundStats>,
    pub reference_post_mean: f64,
    pub config: MiningConfig,
}

#[derive(Debug, Default)]
pub struct MiningOutput {
    /// Input units with scores, followed by every regenerated unit.
    pub units: Vec<FacetUnit>,
    pub accepted: Vec<String>,
    /// Initial over-ceiling negatives removed under the drop policy.
    pub dropped: Vec<String>,
    pub supplemental: RecomposeOutput,
    pub report: ScoreShiftReport,
    pub failures: Vec<(String, Error)>,
}

impl MiningOutput {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Scoring and regeneration backends plus corpus context.
pub struct Miner<'a> {
    pub ctx: StageContext<'a>,
    pub scorer: &'a dyn Scorer,
    pub config: &'a MiningConfig,
}

enum Outcome {
    Accepted,
    Rejected,
    Carry,
    StillEasy,
}

impl<'a> Miner<'a> {
    fn schema(&self) -> &FacetSchema {
        self.ctx.schema
    }

    fn outcome(&self, score: f64, round: u32) -> Outcome {
        let c = self.config;
        if score >= c.hard_ceiling {
            Outcome::Rejected
        } else if score >= c.easy_threshold {
            Outcome::Accepted
        } else if round < c.max_rounds {
            Outcome::Carry
        } else {
            Outcome::StillEasy
        }
    }

    /// Runs up to `max_rounds` regeneration rounds and recomposes accepted
    /// units into supplemental triplets. Unscored negatives are scored
    /// first. A failed regeneration or rescoring affects only its unit.
    pub async fn run(&self, docs: &[Document], units: &[FacetUnit]) -> Result<MiningOutput> {
        self.config.validate()?;
        let units = if units.iter().any(|u| u.kind.is_negative() && u.score.is_none()) {
            score_negatives(units, self.scorer, self.ctx.concurrency).await?
        } else {
            units.to_vec()
        };
        let docs_by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
        let anchors = anchor_index(&units);

        let classified = classify(&units, self.config)?;
        let mut report = ScoreShiftReport {
            before: ScoreSummary::of(
                units.iter().filter(|u| u.kind.is_negative()).filter_map(|u| u.score),
            ),
            easy_before: ScoreSummary::of(classified.easy.iter().filter_map(|u| u.score)),
            reference_post_mean: REFERENCE_POST_MEAN,
            config: self.config.clone(),
            ..Default::default()
        };
        report.counts.negatives = report.before.count;
        report.counts.easy = classified.easy.len();
        report.counts.retained = classified.retained.len();
        report.counts.over_ceiling = classified.over_ceiling.len();

        let mut out = MiningOutput::default();
        for u in &classified.over_ceiling {
            tracing::warn!(
                unit = %u.unit_id,
                score = u.score,
                "initial negative at or above the hard ceiling may be a false negative"
            );
        }
        let mut over: HashSet<String> =
            classified.over_ceiling.iter().map(|u| u.unit_id.clone()).collect();
        if self.config.over_ceiling_policy == OverCeilingPolicy::Drop {
            out.dropped = classified.over_ceiling.iter().map(|u| u.unit_id.clone()).collect();
            report.counts.dropped = out.dropped.len();
        }

        // Origin (initial easy unit) of every pending unit.
        let mut pending: Vec<(FacetUnit, String)> = classified
            .easy
            .iter()
            .map(|u| ((*u).clone(), u.unit_id.clone()))
            .collect();
        let mut regenerated: Vec<FacetUnit> = Vec::new();
        let mut accepted: Vec<(FacetUnit, String)> = Vec::new();

        for round in 1..=self.config.max_rounds {
            if pending.is_empty() {
                break;
            }
            let mut stats = RoundStats {
                round,
                regenerated: pending.len(),
                ..Default::default()
            };
            let results = ordered(pending.iter(), self.ctx.concurrency, |(prior, _)| {
                let (docs_by_id, anchors) = (&docs_by_id, &anchors);
                async move {
                    let r = async {
                        let doc = docs_by_id.get(prior.doc_id.as_str()).ok_or_else(|| {
                            Error::MissingUnit(format!("document `{}` not in corpus", prior.doc_id))
                        })?;
                        let anchor = counterpart(anchors, prior)?;
                        let mut unit = self
                            .ctx
                            .regenerate_negative(
                                doc,
                                &prior.facet,
                                anchor,
                                prior,
                                score_of(prior)?,
                                self.config.target_band,
                                &self.ctx.templates.regenerate,
                            )
                            .await?;
                        unit.score = Some(self.scorer.score(&anchor.text, &unit.text).await?);
                        Ok::<_, Error>(unit)
                    }
                    .await;
                    (prior.unit_id.clone(), r)
                }
            })
            .await;

            let mut next = Vec::new();
            for ((_, origin), (prior_id, r)) in pending.into_iter().zip(results) {
                let mut unit = match r {
                    Ok(u) => u,
                    Err(e) => {
                        stats.failed += 1;
                        out.failures.push((prior_id, e));
                        continue;
                    }
                };
                let s = unit.score.expect("rescored");
                match self.outcome(s, round) {
                    Outcome::Accepted => {
                        stats.accepted += 1;
                        unit.flags.push(HARD_NEGATIVE_FLAG.to_string());
                        accepted.push((unit.clone(), origin));
                    }
                    Outcome::Rejected => {
                        stats.rejected += 1;
                        unit.flags.push(REJECTED_FLAG.to_string());
                        over.insert(unit.unit_id.clone());
                    }
                    Outcome::Carry => next.push((unit.clone(), origin)),
                    Outcome::StillEasy => {
                        stats.still_easy += 1;
                        unit.flags.push(STILL_EASY_FLAG.to_string());
                        if self.config.still_easy_policy == StillEasyPolicy::AcceptFlagged {
                            unit.flags.push(HARD_NEGATIVE_FLAG.to_string());
                            accepted.push((unit.clone(), origin));
                        }
                    }
                }
                regenerated.push(unit);
            }
            pending = next;
            report.counts.regenerations += stats.regenerated;
            report.counts.accepted += stats.accepted;
            report.counts.rejected += stats.rejected;
            report.counts.still_easy += stats.still_easy;
            report.counts.failed += stats.failed;
            report.rounds.push(stats);
        }
        if self.config.still_easy_policy == StillEasyPolicy::AcceptFlagged {
            report.counts.accepted += report.counts.still_easy;
        }

        let mut scored = units;
        for u in scored.iter_mut().filter(|u| over.contains(&u.unit_id)) {
            if !u.flags.iter().any(|f| f == OVER_CEILING_FLAG) {
                u.flags.push(OVER_CEILING_FLAG.to_string());
            }
        }

        out.supplemental = self.supplement(&scored, &accepted)?;
        report.counts.supplemental_triplets = out.supplemental.triplets.len();
        report.regenerated = ScoreSummary::of(regenerated.iter().filter_map(|u| u.score));
        let replaced: HashMap<&str, f64> = accepted
            .iter()
            .map(|(u, origin)| (origin.as_str(), u.score.unwrap()))
            .collect();
        let dropped: HashSet<&str> = out.dropped.iter().map(String::as_str).collect();
        report.after = ScoreSummary::of(
            scored
                .iter()
                .filter(|u| u.kind.is_negative() && !dropped.contains(u.unit_id.as_str()))
                .map(|u| replaced.get(u.unit_id.as_str()).copied().or(u.score).unwrap()),
        );

        out.accepted = accepted.into_iter().map(|(u, _)| u.unit_id).collect();
        scored.extend(regenerated);
        out.units = scored;
        out.report = report;
        Ok(out)
    }

    /// Recomposes each accepted unit into the negative slot of its
    /// document's pseudo-documents.
    fn supplement(
        &self,
        units: &[FacetUnit],
        accepted: &[(FacetUnit, String)],
    ) -> Result<RecomposeOutput> {
        let groups = DocUnits::group(units);
        let by_doc: HashMap<&str, &DocUnits<'_>> = groups.iter().map(|g| (g.doc_id, g)).collect();
        let recomposer = Recomposer::new(self.schema(), &self.config.separator);
        let mut out = RecomposeOutput::default();
        for (unit, _) in accepted {
            let doc = by_doc.get(unit.doc_id.as_str()).ok_or_else(|| {
                Error::MissingUnit(format!("no stage-2 units for document `{}`", unit.doc_id))
            })?;
            let anchor = recomposer.anchor(doc, &unit.facet)?;
            let positives =
                recomposer.enumerate_compositions(doc, &unit.facet, Polarity::Positive, unit.variant)?;
            let negatives = recomposer.compose_with_target(doc, unit, Polarity::Negative)?;
            let pairs = build_query_positive_pairs(&anchor, &positives)?;
            let mut rng = seeded_rng(self.config.seed.unwrap_or(0), &format!("mine:{}", unit.unit_id));
            let mode = match self.config.supplement_pairing {
                PairingMode::SampleOne => TripletMode::SampleOne,
                _ => TripletMode::HardNegative,
            };
            let mut assembled =
                assemble_triplets(&pairs, Negatives::Candidates(&negatives), mode, &mut rng)?;
            for t in &mut assembled.triplets {
                t.mode = TripletMode::HardNegative;
            }
            out.triplets.extend(assembled.triplets);
            out.pseudo_documents.extend(negatives);
        }
        Ok(out)
    }
}

/// Drops triplets whose negative has one of `units` in its target slot.
pub fn without_negatives(
    triplets: Vec<Triplet>,
    pseudo_documents: &[PseudoDocument],
    units: &[String],
) -> Vec<Triplet> {
    if units.is_empty() {
        return triplets;
    }
    let units: HashSet<&str> = units.iter().map(String::as_str).collect();
    let banned: HashSet<&str> = pseudo_documents
        .iter()
        .filter(|p| units.contains(p.target_unit()))
        .map(|p| p.id.as_str())
        .collect();
    triplets
        .into_iter()
        .filter(|t| !banned.contains(t.negative_ref.as_str()))
        .collect()
}

/// Mean score of each facet's summary and similar units against the full
/// document text, keyed facet then kind.
pub async fn facet_document_similarity(
    units: &[FacetUnit],
    docs: &[Document],
    schema: &FacetSchema,
    scorer: &dyn Scorer,
    concurrency: usize,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let docs_by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut jobs = Vec::new();
    for u in units
        .iter()
        .filter(|u| matches!(u.kind, UnitKind::Summary | UnitKind::Similar))
    {
        schema.check_facet(&u.facet)?;
        let doc = docs_by_id.get(u.doc_id.as_str()).ok_or_else(|| {
            Error::MissingUnit(format!("document `{}` not in corpus", u.doc_id))
        })?;
        jobs.push((u, doc.text.as_str()));
    }
    let scores = ordered(jobs, concurrency, |(u, text)| async move {
        scorer.score(text, &u.text).await.map(|s| (u, s))
    })
    .await;
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in scores {
        let (u, s) = r?;
        let e = sums.entry((u.facet.clone(), u.kind.to_string())).or_default();
        e.0 += s;
        e.1 += 1;
    }
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((facet, kind), (sum, n)) in sums {
        table.entry(facet).or_default().insert(kind, sum / n as f64);
    }
    for f in &schema.facets {
        if !table.contains_key(f) {
            return Err(Error::invalid(format!("no summary or similar units for facet `{f}`")));
        }
    }
    Ok(table)
}
