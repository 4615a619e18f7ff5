//! Semantic candidate generation for ads, with an A/A′ predictability
//! harness.
//!
//! Pipeline: [`catalog`] → [`extract`] → [`graph`] → [`engine`] → [`eval`].

pub mod catalog;
pub mod engine;
pub mod eval;
pub mod extract;
pub mod graph;
pub mod similarity;
pub mod util;

pub use catalog::{load_catalog, Ad, AdCatalog, CatalogError, Perturbation, ShadowPair};
pub use engine::{Engine, EngineConfig, EngineError, RankedCandidates, Retriever, RetrieverTag};
pub use extract::{SemanticMetadata, Taxonomy};
pub use graph::{build_graph, build_index, expand, CategoryIndex, GraphParams, SemanticGraph};
pub use similarity::SimilarityParams;
