use std::collections::BTreeMap;

use fable_core::backends::BackendSet;
use fable_core::corpus::{load_documents, write_jsonl, Document, FacetSchema, UnitKind};
use fable_core::decompose::{GenerationSettings, StageContext, TemplateSet};
use fable_core::pipeline::{run_decompose, run_synthesize};

#[tokio::test]
async fn abstracts_corpus_scale_counts() {
    let schema = FacetSchema::scientific();
    let docs: Vec<Document> = (0..1017)
        .map(|i| Document::new(format!("p{i}"), format!("Abstract {i}: motivation, approach, findings.")))
        .collect();
    let backends = BackendSet::mock(0, 32);
    let templates = TemplateSet::default();
    let settings = GenerationSettings { seed: Some(0), ..Default::default() };
    let ctx = StageContext {
        generator: &*backends.generator,
        schema: &schema,
        templates: &templates,
        settings: &settings,
        concurrency: backends.concurrency,
    };
    let stage1 = run_decompose(&ctx, &docs, &[]).await;
    assert!(stage1.is_complete());
    assert_eq!(stage1.units.len(), 3051);
    let stage2 = run_synthesize(&ctx, &docs, &stage1.units, 1, &[]).await;
    assert!(stage2.is_complete());
    let mut kinds: BTreeMap<UnitKind, usize> = BTreeMap::new();
    for u in &stage2.units {
        *kinds.entry(u.kind).or_default() += 1;
    }
    assert_eq!(kinds[&UnitKind::Similar], 3051);
    assert_eq!(kinds[&UnitKind::Dissimilar], 3051);
    for u in stage2.units.iter().filter(|u| !u.kind.is_anchor()) {
        let anchor = u.provenance.conditioned_on.as_deref().unwrap();
        assert_eq!(anchor, format!("{}:{}:summary", u.doc_id, u.facet));
    }
}

#[test]
fn exam_items_keep_their_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("items.jsonl");
    let item = Document::new("toefl-1", "A lecture about glaciers.").with_labels([
        ("story", "A professor explains how glaciers carve valleys."),
        ("question", "What is the lecture mainly about?"),
        ("options", "A) erosion B) rivers C) volcanoes D) deserts"),
    ]);
    write_jsonl(&path, [&item]).unwrap();
    let docs = load_documents(&path, &FacetSchema::education()).unwrap();
    assert_eq!(docs, vec![item]);
    assert_eq!(docs[0].facet_labels.as_ref().unwrap().len(), 3);
    assert!(load_documents(&path, &FacetSchema::scientific()).is_err());
}
