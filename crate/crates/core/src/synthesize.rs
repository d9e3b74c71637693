//! Stage 2: similar and dissimilar facet components.
//!
//! Each generation request replays the stage-1 exchange as prior turns
//! (summarize prompt, then the summary or label text as the assistant
//! turn) before the stage-2 prompt, so the model is conditioned on the
//! facet it identified.

use std::collections::HashMap;

use crate::backends::{ordered, BackendError, ChatMessage, ChatRequest};
use crate::corpus::{Document, FacetUnit, Provenance, UnitKind};
use crate::decompose::{
    collect_stage, summary_prompt, unit_id, PromptTemplate, PromptVars, Stage, StageContext,
    StageOutput,
};
use crate::{Error, Result};

fn check_anchor(doc: &Document, facet: &str, anchor: &FacetUnit) -> Result<()> {
    if !anchor.kind.is_anchor() {
        return Err(Error::invalid(format!(
            "unit `{}` is {}; stage 2 must be conditioned on a summary or original unit",
            anchor.unit_id, anchor.kind
        )));
    }
    if anchor.facet != facet || anchor.doc_id != doc.id {
        return Err(Error::invalid(format!(
            "unit `{}` belongs to ({}, {}), not ({}, {facet})",
            anchor.unit_id, anchor.doc_id, anchor.facet, doc.id
        )));
    }
    Ok(())
}

fn check_stage(template: &PromptTemplate, stage: Stage) -> Result<()> {
    if template.stage != stage {
        return Err(Error::invalid(format!(
            "expected a {} template, got {}",
            stage.as_str(),
            template.stage.as_str()
        )));
    }
    Ok(())
}

impl<'a> StageContext<'a> {
    /// The replayed stage-1 exchange: summarize prompt, then the anchor text.
    pub fn decomposition_turns(&self, doc: &Document, facet: &str, anchor: &FacetUnit) -> Vec<ChatMessage> {
        vec![
            ChatMessage::user(summary_prompt(doc, facet, &self.templates.summarize)),
            ChatMessage::assistant(anchor.text.clone()),
        ]
    }

    fn stage2_prompt(&self, template: &PromptTemplate, doc: &Document, facet: &str, anchor: &FacetUnit) -> String {
        template.render(&PromptVars {
            document: &doc.text,
            facet,
            summary: &anchor.text,
            ..Default::default()
        })
    }

    pub fn synthesis_request(
        &self,
        doc: &Document,
        facet: &str,
        anchor: &FacetUnit,
        template: &PromptTemplate,
        variant: u32,
    ) -> ChatRequest {
        let mut messages = self.decomposition_turns(doc, facet, anchor);
        messages.push(ChatMessage::user(self.stage2_prompt(template, doc, facet, anchor)));
        ChatRequest::new(messages)
            .temperature(self.settings.synthesis_temperature)
            .max_tokens(self.settings.max_tokens)
            .seed(self.settings.seed.map(|s| s.wrapping_add(u64::from(variant))))
    }

    async fn synthesize_one(
        &self,
        doc: &Document,
        facet: &str,
        anchor: &FacetUnit,
        template: &PromptTemplate,
        kind: UnitKind,
        variant: u32,
    ) -> Result<FacetUnit> {
        check_anchor(doc, facet, anchor)?;
        let request = self.synthesis_request(doc, facet, anchor, template, variant);
        let text = self.generator.generate(&request).await?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion.into());
        }
        Ok(FacetUnit {
            unit_id: unit_id(&doc.id, facet, kind, variant),
            doc_id: doc.id.clone(),
            facet: facet.to_string(),
            kind,
            text,
            score: None,
            provenance: Provenance {
                backend_id: self.generator.id().to_string(),
                prompt_hash: template.hash.clone(),
                mining_round: 0,
                conditioned_on: Some(anchor.unit_id.clone()),
                parent: None,
            },
            variant,
            flags: Vec::new(),
        })
    }

    pub async fn generate_similar(
        &self,
        doc: &Document,
        facet: &str,
        anchor: &FacetUnit,
        template: &PromptTemplate,
        variant: u32,
    ) -> Result<FacetUnit> {
        check_stage(template, Stage::Similar)?;
        self.synthesize_one(doc, facet, anchor, template, UnitKind::Similar, variant)
            .await
    }

    pub async fn generate_dissimilar(
        &self,
        doc: &Document,
        facet: &str,
        anchor: &FacetUnit,
        template: &PromptTemplate,
        variant: u32,
    ) -> Result<FacetUnit> {
        check_stage(template, Stage::Dissimilar)?;
        self.synthesize_one(doc, facet, anchor, template, UnitKind::Dissimilar, variant)
            .await
    }

    /// Request for regenerating `prior`: the stage-1 exchange, the
    /// dissimilar prompt with `prior` as its answer, then the regeneration
    /// prompt carrying the current score and the target band.
    pub fn regeneration_request(
        &self,
        doc: &Document,
        facet: &str,
        anchor: &FacetUnit,
        prior: &FacetUnit,
        current_score: f64,
        band: (f64, f64),
        template: &PromptTemplate,
    ) -> ChatRequest {
        let mut messages = self.decomposition_turns(doc, facet, anchor);
        messages.push(ChatMessage::user(self.stage2_prompt(
            &self.templates.dissimilar,
            doc,
            facet,
            anchor,
        )));
        messages.push(ChatMessage::assistant(prior.text.clone()));
        messages.push(ChatMessage::user(template.render(&PromptVars {
            document: &doc.text,
            facet,
            summary: &anchor.text,
            score: Some(current_score),
            band: Some(band),
        })));
        ChatRequest::new(messages)
            .temperature(self.settings.synthesis_temperature)
            .max_tokens(self.settings.max_tokens)
            .seed(
                self.settings
                    .seed
                    .map(|s| s.wrapping_add(u64::from(prior.variant))),
            )
    }

    /// Rewrites a negative toward the target band. Whether `prior` is an
    /// easy negative is the caller's decision; the round always increments.
    #[allow(clippy::too_many_arguments)]
    pub async fn regenerate_negative(
        &self,
        doc: &Document,
        facet: &str,
        anchor: &FacetUnit,
        prior: &FacetUnit,
        current_score: f64,
        band: (f64, f64),
        template: &PromptTemplate,
    ) -> Result<FacetUnit> {
        check_stage(template, Stage::Regenerate)?;
        check_anchor(doc, facet, anchor)?;
        if !prior.kind.is_negative() || prior.facet != facet || prior.doc_id != doc.id {
            return Err(Error::invalid(format!(
                "unit `{}` is not a negative for ({}, {facet})",
                prior.unit_id, doc.id
            )));
        }
        let (low, high) = band;
        if !(low < high) || !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) {
            return Err(Error::invalid(format!("invalid band ({low}, {high})")));
        }
        if let Some(s) = prior.score {
            if (s - current_score).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "current score {current_score} disagrees with unit `{}` score {s}",
                    prior.unit_id
                )));
            }
        }
        let request =
            self.regeneration_request(doc, facet, anchor, prior, current_score, band, template);
        let text = self.generator.generate(&request).await?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion.into());
        }
        let round = prior.provenance.mining_round + 1;
        let base = match prior.kind {
            UnitKind::Regenerated => prior
                .unit_id
                .rsplit_once(":r")
                .map_or(prior.unit_id.as_str(), |(b, _)| b),
            _ => prior.unit_id.as_str(),
        };
        Ok(FacetUnit {
            unit_id: format!("{base}:r{round}"),
            doc_id: doc.id.clone(),
            facet: facet.to_string(),
            kind: UnitKind::Regenerated,
            text,
            score: None,
            provenance: Provenance {
                backend_id: self.generator.id().to_string(),
                prompt_hash: template.hash.clone(),
                mining_round: round,
                conditioned_on: Some(anchor.unit_id.clone()),
                parent: Some(prior.unit_id.clone()),
            },
            variant: prior.variant,
            flags: Vec::new(),
        })
    }

    /// Full stage-2 pass. Returns, per document and facet in schema order,
    /// the anchor unit followed by `variants` similar and `variants`
    /// dissimilar units. Refuses documents without stage-1 context.
    pub async fn synthesize_corpus(
        &self,
        docs: &[Document],
        anchors: &[FacetUnit],
        variants: u32,
    ) -> StageOutput {
        let mut by_key: HashMap<(&str, &str), &FacetUnit> = HashMap::new();
        for u in anchors.iter().filter(|u| u.kind.is_anchor()) {
            by_key.insert((u.doc_id.as_str(), u.facet.as_str()), u);
        }
        let variants = variants.max(1);
        let results = ordered(docs.iter(), self.concurrency, |doc| {
            let by_key = &by_key;
            async move {
                let r = async {
                    let mut out = Vec::new();
                    for facet in &self.schema.facets {
                        let anchor = by_key.get(&(doc.id.as_str(), facet.as_str())).ok_or_else(|| {
                            Error::MissingUnit(format!(
                                "no decomposition context for ({}, {facet}); run decompose first",
                                doc.id
                            ))
                        })?;
                        out.push((*anchor).clone());
                        for v in 0..variants {
                            out.push(
                                self.generate_similar(doc, facet, anchor, &self.templates.similar, v)
                                    .await?,
                            );
                        }
                        for v in 0..variants {
                            out.push(
                                self.generate_dissimilar(
                                    doc,
                                    facet,
                                    anchor,
                                    &self.templates.dissimilar,
                                    v,
                                )
                                .await?,
                            );
                        }
                    }
                    Ok(out)
                }
                .await;
                (doc.id.clone(), r)
            }
        })
        .await;
        collect_stage(results)
    }
}
