//! Two-stage retrieval over a frozen index + graph, the raw-title baseline,
//! snapshot persistence and the HTTP layer.

mod config;
pub mod service;
pub mod snapshot;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::AdCatalog;
use crate::extract::{ExtractError, RuleExtractor, SemanticMetadata};
use crate::graph::{
    build_graph, build_index, expand_nodes, CategoryIndex, DenseIndex, GraphError, GraphParams, SemanticGraph,
};
use crate::similarity::{jaccard_sorted, SimilarityError, SimilarityParams};
use crate::util::{fnv1a64, splitmix64, unit_interval};

pub use config::ConfigFile;
pub use snapshot::SnapshotError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown seed `{0}`")]
    UnknownSeed(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("baseline retriever unavailable: snapshot was built without catalog titles")]
    BaselineUnavailable,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("catalog and metadata disagree on ad `{0}`")]
    CatalogMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RetrieverTag {
    Semantic,
    Baseline,
}

impl RetrieverTag {
    pub const ALL: [RetrieverTag; 2] = [RetrieverTag::Semantic, RetrieverTag::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrieverTag::Semantic => "semantic",
            RetrieverTag::Baseline => "baseline",
        }
    }
}

impl fmt::Display for RetrieverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrieverTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "semantic" => Ok(RetrieverTag::Semantic),
            "baseline" => Ok(RetrieverTag::Baseline),
            other => Err(format!("unknown retriever `{other}` (expected semantic or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub ad_id: String,
    pub final_score: f64,
    pub stage1_score: f64,
    pub stage2_score: f64,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub seed_id: String,
    pub items: Vec<Candidate>,
    pub k: usize,
    pub retriever_tag: RetrieverTag,
}

impl RankedCandidates {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|c| c.ad_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub k_default: usize,
    pub stage1_budget: usize,
    pub depth: usize,
    pub similarity: SimilarityParams,
    /// Weight of the normalized stage-1 score in the final blend.
    pub blend_alpha: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k_default: 100,
            stage1_budget: crate::graph::DEFAULT_BUDGET,
            depth: crate::graph::DEFAULT_DEPTH,
            similarity: SimilarityParams::default(),
            blend_alpha: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.k_default == 0 || self.k_default > self.stage1_budget {
            return bad(format!(
                "need 1 <= k_default <= stage1_budget (got {} and {})",
                self.k_default, self.stage1_budget
            ));
        }
        if self.depth == 0 {
            return bad("depth must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.blend_alpha) {
            return bad(format!("blend_alpha {} outside [0, 1]", self.blend_alpha));
        }
        self.similarity.validate()?;
        Ok(())
    }
}

/// Anything the delivery simulator can ask for a top-k list.
pub trait Retriever: Send + Sync {
    fn tag(&self) -> RetrieverTag;
    fn contains(&self, ad_id: &str) -> bool;
    fn retrieve(&self, seed_id: &str, k: usize) -> Result<RankedCandidates, EngineError>;
}

/// Interned attribute sets of one ad.
#[derive(Debug, Clone, Default)]
struct AttrProfile {
    brand: Vec<u32>,
    product: Vec<u32>,
    ctx_phrases: Vec<u32>,
    ctx_tokens: Vec<u32>,
}

#[derive(Default)]
struct Interner(HashMap<String, u32>);

impl Interner {
    fn ids<'a>(&mut self, items: impl IntoIterator<Item = &'a String>) -> Vec<u32> {
        let mut out: Vec<u32> = items
            .into_iter()
            .map(|s| {
                let next = self.0.len() as u32;
                *self.0.entry(s.clone()).or_insert(next)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Frozen retrieval state. Cheap to share across threads.
pub struct Engine {
    config: EngineConfig,
    index: CategoryIndex,
    graph: SemanticGraph,
    /// In node order.
    metadata: Vec<SemanticMetadata>,
    /// Raw titles in node order, when built with a catalog.
    titles: Option<Vec<String>>,
    hash: String,
    dense: DenseIndex,
    profiles: Vec<AttrProfile>,
    title_tokens: Option<Vec<Vec<u32>>>,
    id_hashes: Vec<u64>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("ads", &self.len())
            .field("edges", &self.graph.edge_count())
            .field("hash", &self.hash)
            .finish()
    }
}

impl Engine {
    /// Builds index and graph from metadata. `catalog` supplies the raw
    /// titles the baseline needs and must cover exactly the same ads.
    pub fn build(
        metadata: Vec<SemanticMetadata>,
        catalog: Option<&AdCatalog>,
        config: EngineConfig,
        graph_params: GraphParams,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let index = build_index(&metadata)?;
        let graph = build_graph(&index, &metadata, graph_params)?;
        let mut metadata = metadata;
        metadata.sort_by(|a, b| a.ad_id.cmp(&b.ad_id));
        let titles = match catalog {
            None => None,
            Some(cat) => {
                if let Some(ad) = cat.ads().iter().find(|a| graph.node_id(&a.ad_id).is_none()) {
                    return Err(EngineError::CatalogMismatch(ad.ad_id.clone()));
                }
                let titles = graph
                    .nodes()
                    .iter()
                    .map(|id| {
                        cat.get(id).map(|a| a.title.clone()).ok_or_else(|| EngineError::CatalogMismatch(id.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(titles)
            }
        };
        let mut engine = Self::assemble(config, index, graph, metadata, titles, String::new());
        engine.hash = snapshot::content_hash(&engine);
        Ok(engine)
    }

    /// Rule-based extraction plus [`Engine::build`], keeping catalog titles.
    pub fn from_catalog(
        catalog: &AdCatalog,
        extractor: &RuleExtractor,
        config: EngineConfig,
        graph_params: GraphParams,
    ) -> Result<Self, EngineError> {
        let metadata = extractor.extract_catalog(catalog)?;
        Self::build(metadata, Some(catalog), config, graph_params)
    }

    fn assemble(
        config: EngineConfig,
        index: CategoryIndex,
        mut graph: SemanticGraph,
        metadata: Vec<SemanticMetadata>,
        titles: Option<Vec<String>>,
        hash: String,
    ) -> Self {
        graph.rebuild_lookup();
        let metas: Vec<&SemanticMetadata> = metadata.iter().collect();
        let dense = DenseIndex::new(&index, graph.nodes(), &metas);
        let mut attrs = Interner::default();
        let profiles = metadata
            .iter()
            .map(|m| AttrProfile {
                brand: attrs.ids(&m.brand_attrs),
                product: attrs.ids(&m.product_attrs),
                ctx_phrases: attrs.ids(&m.contextual_phrases()),
                ctx_tokens: attrs.ids(&m.contextual_tokens()),
            })
            .collect();
        let mut words = Interner::default();
        let title_tokens = titles.as_ref().map(|ts| {
            ts.iter()
                .map(|t| {
                    let raw: Vec<String> = t.split_whitespace().map(str::to_string).collect();
                    words.ids(&raw)
                })
                .collect()
        });
        let id_hashes = graph.nodes().iter().map(|id| fnv1a64(id.as_bytes())).collect();
        Self { config, index, graph, metadata, titles, hash, dense, profiles, title_tokens, id_hashes }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn graph_params(&self) -> GraphParams {
        self.graph.params
    }

    pub fn index(&self) -> &CategoryIndex {
        &self.index
    }

    pub fn graph(&self) -> &SemanticGraph {
        &self.graph
    }

    /// Metadata sorted by ad id.
    pub fn metadata(&self) -> &[SemanticMetadata] {
        &self.metadata
    }

    pub fn metadata_for(&self, ad_id: &str) -> Option<&SemanticMetadata> {
        self.graph.node_id(ad_id).map(|n| &self.metadata[n as usize])
    }

    pub fn titles(&self) -> Option<&[String]> {
        self.titles.as_deref()
    }

    /// Hex SHA-256 of the snapshot payload.
    pub fn snapshot_hash(&self) -> &str {
        &self.hash
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn contains(&self, ad_id: &str) -> bool {
        self.graph.node_id(ad_id).is_some()
    }

    pub fn has_baseline(&self) -> bool {
        self.title_tokens.is_some()
    }

    /// Replaces query-time parameters. Index and graph are unaffected.
    pub fn set_config(&mut self, config: EngineConfig) -> Result<(), EngineError> {
        config.validate()?;
        self.config = config;
        self.hash = snapshot::content_hash(self);
        Ok(())
    }

    fn seed_node(&self, seed_id: &str, k: usize) -> Result<u32, EngineError> {
        if self.graph.is_empty() {
            return Err(EngineError::EmptyIndex);
        }
        if k == 0 {
            return Err(EngineError::InvalidK);
        }
        self.graph.node_id(seed_id).ok_or_else(|| EngineError::UnknownSeed(seed_id.to_string()))
    }

    fn stage2(&self, a: u32, b: u32) -> f64 {
        let (pa, pb) = (&self.profiles[a as usize], &self.profiles[b as usize]);
        let p = &self.config.similarity;
        let phrase = jaccard_sorted(&pa.ctx_phrases, &pb.ctx_phrases);
        let contextual = if phrase >= p.theta { phrase } else { jaccard_sorted(&pa.ctx_tokens, &pb.ctx_tokens) };
        let w = p.attr_weights;
        let score = w.brand * jaccard_sorted(&pa.brand, &pb.brand)
            + w.product * jaccard_sorted(&pa.product, &pb.product)
            + w.contextual * contextual;
        score.clamp(0.0, 1.0)
    }

    /// Semantic two-stage retrieval.
    ///
    /// Stage 1 pools the best-first expansion with the strongest direct
    /// category co-scorers; its score is the larger of direct overlap and
    /// path weight, min-max normalized over the pool (1.0 when the pool is
    /// flat). Stage 2 is attribute relevance. Items are ranked by the blend,
    /// ties by ad id.
    pub fn retrieve(&self, seed_id: &str, k: usize) -> Result<RankedCandidates, EngineError> {
        let seed = self.seed_node(seed_id, k)?;
        let budget = self.config.stage1_budget;
        let direct = self.dense.co_scores(seed);
        let overlap = |v: u32| direct.binary_search_by_key(&v, |&(n, _)| n).map(|i| direct[i].1).unwrap_or(0.0);

        let mut top_direct = direct.clone();
        top_direct.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        top_direct.truncate(budget);
        let mut pool: HashMap<u32, (f64, u32)> = top_direct.iter().map(|&(v, w)| (v, (w, 1))).collect();
        for (v, path, hops) in expand_nodes(&[seed], &self.graph, self.config.depth, budget) {
            let o = overlap(v);
            let hop = if o > 0.0 { 1 } else { hops };
            pool.insert(v, (o.max(path), hop));
        }
        Ok(RankedCandidates {
            seed_id: seed_id.to_string(),
            items: self.rank_pool(seed, pool, k),
            k,
            retriever_tag: RetrieverTag::Semantic,
        })
    }

    fn rank_pool(&self, seed: u32, pool: HashMap<u32, (f64, u32)>, k: usize) -> Vec<Candidate> {
        let (lo, hi) =
            pool.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(s, _)| (lo.min(s), hi.max(s)));
        let alpha = self.config.blend_alpha;
        let mut scored: Vec<(u32, Candidate)> = pool
            .into_iter()
            .map(|(v, (stage1, hops))| {
                let norm = if hi > lo { (stage1 - lo) / (hi - lo) } else { 1.0 };
                let stage2 = self.stage2(seed, v);
                let cand = Candidate {
                    ad_id: String::new(),
                    final_score: alpha * norm + (1.0 - alpha) * stage2,
                    stage1_score: stage1,
                    stage2_score: stage2,
                    hop_count: hops,
                };
                (v, cand)
            })
            .collect();
        top_k_by(&mut scored, k, |(v, c)| (c.final_score, *v));
        scored
            .into_iter()
            .map(|(v, mut c)| {
                c.ad_id = self.graph.ad_id(v).to_string();
                c
            })
            .collect()
    }

    /// Raw-title baseline: overlap count of whitespace-split, un-normalized
    /// title tokens, ties broken by a pseudo-random key of the two ad ids.
    /// Every non-seed ad is ranked, including those with zero overlap.
    pub fn baseline_retrieve(&self, seed_id: &str, k: usize) -> Result<RankedCandidates, EngineError> {
        let tokens = self.title_tokens.as_ref().ok_or(EngineError::BaselineUnavailable)?;
        let seed = self.seed_node(seed_id, k)?;
        let seed_tokens = &tokens[seed as usize];
        let seed_hash = self.id_hashes[seed as usize];
        let mut scored: Vec<(u32, Candidate)> = (0..self.len() as u32)
            .filter(|&v| v != seed)
            .map(|v| {
                let overlap = sorted_intersection(seed_tokens, &tokens[v as usize]) as f64;
                let tie = baseline_tie(seed_hash, self.id_hashes[v as usize]);
                let cand = Candidate {
                    ad_id: String::new(),
                    final_score: overlap + tie,
                    stage1_score: overlap,
                    stage2_score: tie,
                    hop_count: 0,
                };
                (v, cand)
            })
            .collect();
        top_k_by(&mut scored, k, |(v, c)| (c.final_score, *v));
        Ok(RankedCandidates {
            seed_id: seed_id.to_string(),
            items: scored
                .into_iter()
                .map(|(v, mut c)| {
                    c.ad_id = self.graph.ad_id(v).to_string();
                    c
                })
                .collect(),
            k,
            retriever_tag: RetrieverTag::Baseline,
        })
    }

    pub fn retrieve_with(&self, tag: RetrieverTag, seed_id: &str, k: usize) -> Result<RankedCandidates, EngineError> {
        match tag {
            RetrieverTag::Semantic => self.retrieve(seed_id, k),
            RetrieverTag::Baseline => self.baseline_retrieve(seed_id, k),
        }
    }

    /// A [`Retriever`] view of one arm.
    pub fn retriever(&self, tag: RetrieverTag) -> Result<EngineRetriever<'_>, EngineError> {
        if tag == RetrieverTag::Baseline && !self.has_baseline() {
            return Err(EngineError::BaselineUnavailable);
        }
        Ok(EngineRetriever { engine: self, tag })
    }
}

pub struct EngineRetriever<'a> {
    engine: &'a Engine,
    tag: RetrieverTag,
}

impl Retriever for EngineRetriever<'_> {
    fn tag(&self) -> RetrieverTag {
        self.tag
    }

    fn contains(&self, ad_id: &str) -> bool {
        self.engine.contains(ad_id)
    }

    fn retrieve(&self, seed_id: &str, k: usize) -> Result<RankedCandidates, EngineError> {
        self.engine.retrieve_with(self.tag, seed_id, k)
    }
}

/// Tie-break key in [0, 1) for the baseline.
pub fn baseline_tie(seed_hash: u64, candidate_hash: u64) -> f64 {
    unit_interval(splitmix64(seed_hash ^ candidate_hash))
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Keeps the `k` best entries by (score desc, node asc), sorted.
fn top_k_by<T>(items: &mut Vec<T>, k: usize, key: impl Fn(&T) -> (f64, u32)) {
    let cmp = |a: &T, b: &T| {
        let (sa, va) = key(a);
        let (sb, vb) = key(b);
        sb.total_cmp(&sa).then(va.cmp(&vb))
    };
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(cmp);
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::catalog::{generate_synthetic_catalog, Ad, SynthConfig};
    use crate::extract::Taxonomy;

    fn meta(id: &str, cats: &[(&str, f64)], product: &[&str]) -> SemanticMetadata {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        SemanticMetadata {
            ad_id: id.into(),
            categories: cats.iter().map(|(l, s)| (l.to_string(), *s)).collect(),
            brand_attrs: set(&["b"]),
            product_attrs: set(product),
            contextual_attrs: BTreeSet::new(),
            phrases: BTreeSet::new(),
            tokens: BTreeSet::new(),
            caption: None,
            low_coverage: cats.is_empty(),
        }
    }

    fn engine(metas: Vec<SemanticMetadata>) -> Engine {
        Engine::build(metas, None, EngineConfig { k_default: 1, ..Default::default() }, GraphParams::default()).unwrap()
    }

    #[test]
    fn isolated_seed_gets_nothing() {
        let e = engine(vec![meta("a", &[("x", 1.0)], &[]), meta("b", &[("y", 1.0)], &[])]);
        assert!(e.retrieve("a", 5).unwrap().items.is_empty());
    }

    #[test]
    fn identical_neighbor_ranks_first() {
        let e = engine(vec![
            meta("a", &[("x", 1.0)], &["shoe"]),
            meta("b", &[("x", 1.0)], &["shoe"]),
            meta("c", &[("x", 0.5)], &["boot"]),
        ]);
        let r = e.retrieve("a", 1).unwrap();
        assert_eq!(r.items.len(), 1);
        assert_eq!(r.items[0].ad_id, "b");
        let all = e.retrieve("a", 10).unwrap();
        assert!(all.items.iter().all(|c| c.final_score <= r.items[0].final_score));
        assert_eq!(r.items[0].stage1_score, 1.0);
        assert_eq!(r.retriever_tag, RetrieverTag::Semantic);
    }

    #[test]
    fn errors() {
        let e = engine(vec![meta("a", &[("x", 1.0)], &[])]);
        assert!(matches!(e.retrieve("zz", 5), Err(EngineError::UnknownSeed(_))));
        assert!(matches!(e.retrieve("a", 0), Err(EngineError::InvalidK)));
        assert!(matches!(e.baseline_retrieve("a", 5), Err(EngineError::BaselineUnavailable)));
        let empty = engine(vec![]);
        assert!(matches!(empty.retrieve("a", 5), Err(EngineError::EmptyIndex)));
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        let bad = EngineConfig { k_default: 600, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EngineConfig { blend_alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn catalog_must_match_metadata() {
        let cat = generate_synthetic_catalog(&SynthConfig { ads: 5, ..Default::default() }, 1).unwrap();
        let mut metas = RuleExtractor::new(Taxonomy::builtin()).extract_catalog(&cat).unwrap();
        metas.pop();
        let r = Engine::build(metas, Some(&cat), EngineConfig::default(), GraphParams::default());
        assert!(matches!(r, Err(EngineError::CatalogMismatch(_))));
    }

    #[test]
    fn baseline_prefers_identical_titles() {
        let mut cat = AdCatalog::new();
        let ad = |id: &str, title: &str| Ad {
            ad_id: id.into(),
            title: title.into(),
            description: "Plain text.".into(),
            landing_page_text: None,
            advertiser_id: "adv".into(),
            latent_topics: ["t".to_string()].into_iter().collect(),
            true_conversion_rate: 0.05,
            base_revenue_per_conversion: 1.0,
        };
        for (id, t) in
            [("a", "Red Trail Shoes"), ("b", "Blue Sofa"), ("c", "Red Trail Shoes"), ("d", "red trail shoes")]
        {
            cat.insert(ad(id, t)).unwrap();
        }
        let e = Engine::from_catalog(
            &cat,
            &RuleExtractor::new(Taxonomy::builtin()),
            EngineConfig { k_default: 1, ..Default::default() },
            GraphParams::default(),
        )
        .unwrap();
        let r = e.baseline_retrieve("a", 3).unwrap();
        assert_eq!(r.items[0].ad_id, "c");
        assert_eq!(r.items[0].stage1_score, 3.0);
        // Raw tokens are case sensitive.
        assert!(r.items[1..].iter().all(|c| c.stage1_score == 0.0));
        assert_eq!(r.items.len(), 3);
    }

    #[test]
    fn top_k_matches_full_sort() {
        let mut v: Vec<(u32, f64)> = (0..50u32).map(|i| (i, ((i * 7) % 11) as f64)).collect();
        let mut full = v.clone();
        full.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        top_k_by(&mut v, 9, |&(i, s)| (s, i));
        assert_eq!(v, full[..9]);
    }
}
