//! Inverted category index and the ad-to-ad semantic graph.
//!
//! Node ids are positions in the lexicographically sorted ad id list, so
//! ordering by node id is the same as ordering by ad id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::extract::SemanticMetadata;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MAX_DEGREE: usize = 64;
pub const DEFAULT_DEPTH: usize = 2;
pub const DEFAULT_BUDGET: usize = 500;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("duplicate ad_id `{0}` in metadata")]
    DuplicateAdId(String),
    #[error("unknown seed `{0}`")]
    UnknownSeed(String),
    #[error("invalid graph parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub ad_id: String,
    pub score: f64,
}

/// Category label → ads scored on it, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryIndex {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_count: usize,
}

impl CategoryIndex {
    pub fn posting(&self, label: &str) -> &[Posting] {
        self.postings.get(label).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Builds postings sorted by (score desc, ad_id asc).
pub fn build_index(metadata: &[SemanticMetadata]) -> Result<CategoryIndex, GraphError> {
    let mut seen = std::collections::HashSet::with_capacity(metadata.len());
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    for meta in metadata {
        if !seen.insert(meta.ad_id.as_str()) {
            return Err(GraphError::DuplicateAdId(meta.ad_id.clone()));
        }
        for (label, &score) in &meta.categories {
            postings.entry(label.clone()).or_default().push(Posting { ad_id: meta.ad_id.clone(), score });
        }
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.ad_id.cmp(&b.ad_id)));
    }
    Ok(CategoryIndex { postings, doc_count: metadata.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub neighbor: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub edge_threshold: f64,
    pub max_degree: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { edge_threshold: DEFAULT_EDGE_THRESHOLD, max_degree: DEFAULT_MAX_DEGREE }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.edge_threshold.is_nan() || self.edge_threshold < 0.0 {
            return Err(GraphError::InvalidParam("edge_threshold must be >= 0".into()));
        }
        if self.max_degree == 0 {
            return Err(GraphError::InvalidParam("max_degree must be >= 1".into()));
        }
        Ok(())
    }
}

/// Undirected ad graph weighted by category overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph {
    nodes: Vec<String>,
    adjacency: Vec<Vec<Edge>>,
    pub params: GraphParams,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl SemanticGraph {
    fn from_parts(nodes: Vec<String>, adjacency: Vec<Vec<Edge>>, params: GraphParams) -> Self {
        let mut g = Self { nodes, adjacency, params, lookup: HashMap::new() };
        g.rebuild_lookup();
        g
    }

    /// Restores the id lookup after deserialization.
    pub(crate) fn rebuild_lookup(&mut self) {
        self.lookup = self.nodes.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_id(&self, ad_id: &str) -> Option<u32> {
        self.lookup.get(ad_id).copied()
    }

    pub fn ad_id(&self, node: u32) -> &str {
        &self.nodes[node as usize]
    }

    /// Neighbors sorted by (weight desc, id asc).
    pub fn neighbors(&self, node: u32) -> &[Edge] {
        &self.adjacency[node as usize]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every undirected edge once, as (smaller id, larger id, weight).
    pub fn edges(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for (u, adj) in self.adjacency.iter().enumerate() {
            for e in adj {
                if (u as u32) < e.neighbor {
                    out.push((self.nodes[u].clone(), self.nodes[e.neighbor as usize].clone(), e.weight));
                }
            }
        }
        out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        out
    }
}

fn by_weight_then_id(a: &Edge, b: &Edge) -> Ordering {
    b.weight.total_cmp(&a.weight).then(a.neighbor.cmp(&b.neighbor))
}

/// Keeps the `max_degree` strongest entries of a sorted list plus any entry
/// tied with the weakest kept weight.
pub(crate) fn truncate_with_ties(sorted: &mut Vec<Edge>, max_degree: usize) {
    if sorted.len() <= max_degree {
        return;
    }
    let cutoff = sorted[max_degree - 1].weight;
    let keep = sorted.iter().take_while(|e| e.weight >= cutoff).count();
    sorted.truncate(keep);
}

/// Posting lists resolved to node ids, for allocation-light overlap scoring.
///
/// Labels are numbered in lexicographic order, so accumulating a node's
/// overlaps label by label adds the same products in the same order as
/// [`category_overlap_score`](crate::similarity::category_overlap_score) and yields bit-identical sums.
#[derive(Debug, Clone, Default)]
pub(crate) struct DenseIndex {
    node_cats: Vec<Vec<(u32, f64)>>,
    label_postings: Vec<Vec<(u32, f64)>>,
}

impl DenseIndex {
    pub(crate) fn new(index: &CategoryIndex, nodes: &[String], metas: &[&SemanticMetadata]) -> Self {
        let lookup: HashMap<&str, u32> = nodes.iter().enumerate().map(|(i, id)| (id.as_str(), i as u32)).collect();
        let label_ids: HashMap<&str, u32> =
            index.postings.keys().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
        let label_postings = index
            .postings
            .values()
            .map(|list| list.iter().filter_map(|p| lookup.get(p.ad_id.as_str()).map(|&v| (v, p.score))).collect())
            .collect();
        let node_cats = metas
            .iter()
            .map(|m| m.categories.iter().filter_map(|(l, &s)| label_ids.get(l.as_str()).map(|&id| (id, s))).collect())
            .collect();
        Self { node_cats, label_postings }
    }

    /// Positive category overlaps of `u` with every co-occurring node except
    /// itself, in node order.
    pub(crate) fn co_scores(&self, u: u32) -> Vec<(u32, f64)> {
        let mut acc = vec![0.0f64; self.node_cats.len()];
        let mut touched = Vec::new();
        for &(label, s) in &self.node_cats[u as usize] {
            for &(v, t) in &self.label_postings[label as usize] {
                if v != u {
                    let slot = &mut acc[v as usize];
                    if *slot == 0.0 {
                        touched.push(v);
                    }
                    *slot += s * t;
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        touched.into_iter().map(|v| (v, acc[v as usize])).filter(|&(_, w)| w > 0.0).collect()
    }
}

/// Builds the graph from posting-list co-occurrence.
///
/// Per node: candidate neighbors are ads sharing a posting list; weight is
/// [`category_overlap_score`](crate::similarity::category_overlap_score); weights below `edge_threshold` are dropped;
/// the strongest `max_degree` are kept, extended to every neighbor tied with
/// the weakest kept weight; finally edges are symmetrized by union.
pub fn build_graph(
    index: &CategoryIndex,
    metadata: &[SemanticMetadata],
    params: GraphParams,
) -> Result<SemanticGraph, GraphError> {
    params.validate()?;
    let mut order: Vec<usize> = (0..metadata.len()).collect();
    order.sort_by(|&a, &b| metadata[a].ad_id.cmp(&metadata[b].ad_id));
    if let Some(w) = order.windows(2).find(|w| metadata[w[0]].ad_id == metadata[w[1]].ad_id) {
        return Err(GraphError::DuplicateAdId(metadata[w[0]].ad_id.clone()));
    }
    let nodes: Vec<String> = order.iter().map(|&i| metadata[i].ad_id.clone()).collect();
    let metas: Vec<&SemanticMetadata> = order.iter().map(|&i| &metadata[i]).collect();
    let dense = DenseIndex::new(index, &nodes, &metas);

    let directed: Vec<Vec<Edge>> = (0..nodes.len() as u32)
        .into_par_iter()
        .map(|u| {
            let mut edges: Vec<Edge> = dense
                .co_scores(u)
                .into_iter()
                .filter(|&(_, w)| w >= params.edge_threshold)
                .map(|(neighbor, weight)| Edge { neighbor, weight })
                .collect();
            edges.sort_by(by_weight_then_id);
            truncate_with_ties(&mut edges, params.max_degree);
            edges
        })
        .collect();

    let mut adjacency: Vec<Vec<Edge>> = directed.clone();
    for (u, edges) in directed.iter().enumerate() {
        for e in edges {
            let v = e.neighbor as usize;
            if directed[v]
                .binary_search_by(|x| by_weight_then_id(x, &Edge { neighbor: u as u32, weight: e.weight }))
                .is_err()
            {
                adjacency[v].push(Edge { neighbor: u as u32, weight: e.weight });
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_by(by_weight_then_id);
    }
    Ok(SemanticGraph::from_parts(nodes, adjacency, params))
}

/// One traversal result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expanded {
    pub ad_id: String,
    pub path_weight: f64,
    pub hop_count: u32,
}

#[derive(PartialEq)]
struct Frontier {
    weight: f64,
    node: u32,
    hops: u32,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Max-heap: highest weight, then lowest id, then fewest hops.
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight.total_cmp(&other.weight).then(other.node.cmp(&self.node)).then(other.hops.cmp(&self.hops))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge weight as used in path products. Capped at 1 so that path weight
/// never increases along a path.
#[inline]
pub fn path_factor(weight: f64) -> f64 {
    weight.min(1.0)
}

/// Best-first expansion from all seeds at once.
///
/// Path weight is the product of [`path_factor`] over the path's edges.
/// Candidates are emitted in order of (path weight desc, ad id asc), each
/// once with its best weight and the fewest hops achieving it. Seeds are
/// never emitted. Stops after `budget` candidates or when no path of at most
/// `depth` hops remains.
pub fn expand(seeds: &[&str], graph: &SemanticGraph, depth: usize, budget: usize) -> Result<Vec<Expanded>, GraphError> {
    if depth == 0 || budget == 0 {
        return Err(GraphError::InvalidParam("depth and budget must be >= 1".into()));
    }
    let seed_ids = seeds
        .iter()
        .map(|s| graph.node_id(s).ok_or_else(|| GraphError::UnknownSeed(s.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(expand_nodes(&seed_ids, graph, depth, budget)
        .into_iter()
        .map(|(node, path_weight, hop_count)| Expanded { ad_id: graph.ad_id(node).to_string(), path_weight, hop_count })
        .collect())
}

/// [`expand`] over node ids, returning (node, path weight, hops).
pub(crate) fn expand_nodes(
    seed_ids: &[u32],
    graph: &SemanticGraph,
    depth: usize,
    budget: usize,
) -> Vec<(u32, f64, u32)> {
    let n = graph.len();
    let mut emitted = vec![false; n];
    // Fewest hops at which a node has been expanded; a later pop of the same
    // node is only useful if it arrives in fewer hops.
    let mut expanded_at = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    for &s in seed_ids {
        emitted[s as usize] = true;
        heap.push(Frontier { weight: 1.0, node: s, hops: 0 });
    }

    let mut out = Vec::new();
    while let Some(Frontier { weight, node, hops }) = heap.pop() {
        let idx = node as usize;
        if !emitted[idx] {
            emitted[idx] = true;
            out.push((node, weight, hops));
            if out.len() >= budget {
                break;
            }
        }
        if hops as usize >= depth || hops >= expanded_at[idx] {
            continue;
        }
        expanded_at[idx] = hops;
        for e in graph.neighbors(node) {
            let next = e.neighbor as usize;
            if emitted[next] && expanded_at[next] <= hops + 1 {
                continue;
            }
            heap.push(Frontier { weight: weight * path_factor(e.weight), node: e.neighbor, hops: hops + 1 });
        }
    }
    out
}
