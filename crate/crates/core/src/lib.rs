//! Facet-conditioned triplet synthesis and faceted query-by-example evaluation.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`corpus`]: domain records, JSONL persistence, seeded splitting.
//! - [`backends`]: generation, pairwise scoring, and embedding backends
//!   (deterministic mocks plus an HTTP contract).
//! - [`decompose`]: stage 1, one facet summary per schema facet.
//! - [`synthesize`]: stage 2, similar/dissimilar facet components via a
//!   self-fed transcript, plus negative regeneration.
//! - [`recompose`]: stage 3, pseudo-document enumeration and triplet assembly.
//! - [`mine`]: score-banded hard-negative regeneration.
//! - [`evaluate`]: NDCG at percent-of-pool cutoffs, MAP, run comparison.
//! - [`benchbuild`]: dispersion-driven query/candidate selection and
//!   inter-annotator agreement.
//! - [`pipeline`]: end-to-end orchestration and run manifests.

pub mod backends;
pub mod benchbuild;
pub mod corpus;
pub mod decompose;
pub mod error;
pub mod evaluate;
pub mod mine;
pub mod pipeline;
pub mod recompose;
pub mod synthesize;

pub use error::{Error, Result};
