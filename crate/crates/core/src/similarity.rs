//! Scoring kernels: Jaccard, phrase-to-token backoff matching, category
//! overlap and attribute relevance. All functions are pure.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::extract::SemanticMetadata;

pub const DEFAULT_THETA: f64 = 0.3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimilarityError {
    #[error("theta {0} outside [0, 1]")]
    Theta(f64),
    #[error("attribute weights must be >= 0 and sum to 1 (got {0:?})")]
    Weights([f64; 3]),
}

/// Step-2 attribute weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttrWeights {
    pub brand: f64,
    pub product: f64,
    pub contextual: f64,
}

impl Default for AttrWeights {
    fn default() -> Self {
        Self { brand: 0.2, product: 0.5, contextual: 0.3 }
    }
}

impl From<[f64; 3]> for AttrWeights {
    fn from(w: [f64; 3]) -> Self {
        Self { brand: w[0], product: w[1], contextual: w[2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// Phrase Jaccard at or above this wins over the token backoff.
    pub theta: f64,
    pub attr_weights: AttrWeights,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { theta: DEFAULT_THETA, attr_weights: AttrWeights::default() }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(SimilarityError::Theta(self.theta));
        }
        let w = self.attr_weights;
        let arr = [w.brand, w.product, w.contextual];
        let nonneg = arr.iter().all(|x| *x >= 0.0 && x.is_finite());
        if !nonneg || (arr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SimilarityError::Weights(arr));
        }
        Ok(())
    }
}

/// |a ∩ b| / |a ∪ b|, or 0 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Phrase Jaccard when it reaches `theta`, otherwise token Jaccard.
pub fn fuzzy_match_sets(
    phrases_a: &BTreeSet<String>,
    phrases_b: &BTreeSet<String>,
    tokens_a: &BTreeSet<String>,
    tokens_b: &BTreeSet<String>,
    theta: f64,
) -> f64 {
    let p = jaccard(phrases_a, phrases_b);
    if p >= theta {
        p
    } else {
        jaccard(tokens_a, tokens_b)
    }
}

pub fn fuzzy_match(a: &SemanticMetadata, b: &SemanticMetadata, params: &SimilarityParams) -> f64 {
    fuzzy_match_sets(&a.phrases, &b.phrases, &a.tokens, &b.tokens, params.theta)
}

/// Σ score_a(c) · score_b(c) over shared category labels.
///
/// Not normalized: can exceed 1 when several shared categories score high.
/// Summation runs in label order so the result is bit-for-bit symmetric.
pub fn category_overlap_score(a: &SemanticMetadata, b: &SemanticMetadata) -> f64 {
    let (small, large) = if a.categories.len() <= b.categories.len() { (a, b) } else { (b, a) };
    small.categories.iter().filter_map(|(label, s)| large.categories.get(label).map(|t| s * t)).sum()
}

/// Weighted brand / product / contextual similarity, clamped to [0, 1].
pub fn attribute_relevance(a: &SemanticMetadata, b: &SemanticMetadata, params: &SimilarityParams) -> f64 {
    let w = params.attr_weights;
    let contextual = fuzzy_match_sets(
        &a.contextual_phrases(),
        &b.contextual_phrases(),
        &a.contextual_tokens(),
        &b.contextual_tokens(),
        params.theta,
    );
    let score = w.brand * jaccard(&a.brand_attrs, &b.brand_attrs)
        + w.product * jaccard(&a.product_attrs, &b.product_attrs)
        + w.contextual * contextual;
    score.clamp(0.0, 1.0)
}

/// [`jaccard`] over strictly increasing slices.
pub fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}
