//! Keyword-coverage extractor: the deterministic reference path.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{ad_phrases, ad_tokens, tokenize, ExtractError, SemanticMetadata, Taxonomy, DEFAULT_PHRASE_MAX};
use crate::catalog::{Ad, AdCatalog};

pub const DEFAULT_MAX_CATEGORIES: usize = 8;

/// Scores each category by the share of its keywords present in the ad's
/// token set, keeps positive scores and truncates to `max_categories` by
/// (score desc, label asc).
pub fn extract_rule_based(ad: &Ad, taxonomy: &Taxonomy) -> Result<SemanticMetadata, ExtractError> {
    RuleExtractor::new(taxonomy.clone()).extract(ad)
}

#[derive(Debug, Clone)]
pub struct RuleExtractor {
    taxonomy: Taxonomy,
    pub max_categories: usize,
    pub phrase_max: usize,
}

impl RuleExtractor {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self { taxonomy, max_categories: DEFAULT_MAX_CATEGORIES, phrase_max: DEFAULT_PHRASE_MAX }
    }

    pub fn with_max_categories(mut self, max_categories: usize) -> Self {
        self.max_categories = max_categories;
        self
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn extract(&self, ad: &Ad) -> Result<SemanticMetadata, ExtractError> {
        if self.taxonomy.is_empty() {
            return Err(ExtractError::EmptyTaxonomy);
        }
        if self.max_categories == 0 {
            return Err(ExtractError::InvalidConfig("max_categories must be >= 1".into()));
        }
        let text_tokens = ad_tokens(ad);
        let title_tokens = tokenize(&ad.title);

        let mut scored: Vec<(&str, f64, Vec<&String>)> = self
            .taxonomy
            .categories()
            .iter()
            .filter_map(|cat| {
                let hits: Vec<&String> = cat.keywords.intersection(&text_tokens).collect();
                (!hits.is_empty()).then(|| {
                    let score = hits.len() as f64 / cat.keywords.len() as f64;
                    (cat.label.as_str(), score, hits)
                })
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.truncate(self.max_categories);

        let mut categories = BTreeMap::new();
        let mut product_attrs = BTreeSet::new();
        let mut contextual_attrs = BTreeSet::new();
        for (label, score, hits) in scored {
            categories.insert(label.to_string(), score);
            for kw in hits {
                if title_tokens.contains(kw) {
                    product_attrs.insert(kw.clone());
                } else {
                    contextual_attrs.insert(kw.clone());
                }
            }
        }

        let brand = ad.advertiser_id.trim().to_lowercase();
        let brand_attrs: BTreeSet<String> = (!brand.is_empty()).then_some(brand).into_iter().collect();

        let mut tokens = text_tokens;
        for attr in brand_attrs.iter().chain(&product_attrs).chain(&contextual_attrs) {
            tokens.extend(tokenize(attr));
        }

        Ok(SemanticMetadata {
            ad_id: ad.ad_id.clone(),
            low_coverage: categories.is_empty(),
            categories,
            brand_attrs,
            product_attrs,
            contextual_attrs,
            phrases: ad_phrases(ad, self.phrase_max),
            tokens,
            caption: None,
        })
    }

    /// Extracts every ad of the catalog, in catalog order.
    pub fn extract_catalog(&self, catalog: &AdCatalog) -> Result<Vec<SemanticMetadata>, ExtractError> {
        catalog.ads().par_iter().map(|ad| self.extract(ad)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{perturb, Perturbation};
    use crate::extract::CategoryDef;
    use proptest::prelude::*;

    fn taxonomy() -> Taxonomy {
        let def = |label: &str, kws: &[&str]| CategoryDef {
            label: label.into(),
            keywords: kws.iter().map(|s| s.to_string()).collect(),
        };
        Taxonomy::new(vec![
            def("apparel/footwear", &["shoes", "sneaker", "boot", "sandal"]),
            def("travel/camping", &["trail", "tent", "hiking", "compass"]),
            def("health/fitness", &["running", "gym", "yoga", "workout"]),
        ])
        .unwrap()
    }

    fn ad(title: &str, description: &str) -> Ad {
        Ad {
            ad_id: "ad-1".into(),
            title: title.into(),
            description: description.into(),
            landing_page_text: None,
            advertiser_id: "ADV-9".into(),
            latent_topics: BTreeSet::new(),
            true_conversion_rate: 0.1,
            base_revenue_per_conversion: 1.0,
        }
    }

    #[test]
    fn full_keyword_coverage_scores_one() {
        let m = extract_rule_based(&ad("shoes sneaker boot sandal", ""), &taxonomy()).unwrap();
        assert_eq!(m.categories["apparel/footwear"], 1.0);
    }

    #[test]
    fn partial_coverage_score() {
        // title tokens {trail, running, shoes}; footwear keywords has 4 entries, 1 hit.
        let m = extract_rule_based(&ad("Trail Running Shoes", ""), &taxonomy()).unwrap();
        assert_eq!(m.categories["apparel/footwear"], 0.25);
        assert_eq!(m.categories["travel/camping"], 0.25);
        assert_eq!(m.categories["health/fitness"], 0.25);
        assert_eq!(m.product_attrs, ["running", "shoes", "trail"].iter().map(|s| s.to_string()).collect());
        assert!(m.contextual_attrs.is_empty());
        assert_eq!(m.brand_attrs.iter().next().unwrap(), "adv-9");
        assert!(m.tokens.contains("adv"));
    }

    #[test]
    fn no_overlap_flags_low_coverage() {
        let m = extract_rule_based(&ad("Quantum Widgets", "Nothing relevant here."), &taxonomy()).unwrap();
        assert!(m.categories.is_empty());
        assert!(m.low_coverage);
    }

    #[test]
    fn truncation_breaks_ties_by_label() {
        let ex = RuleExtractor::new(taxonomy()).with_max_categories(2);
        let m = ex.extract(&ad("Trail Running Shoes", "")).unwrap();
        let labels: Vec<_> = m.categories.keys().cloned().collect();
        assert_eq!(labels, ["apparel/footwear", "health/fitness"]);
    }

    #[test]
    fn contextual_attrs_come_from_description() {
        let m = extract_rule_based(&ad("Boot", "Great for hiking and yoga."), &taxonomy()).unwrap();
        assert!(m.product_attrs.contains("boot"));
        assert!(m.contextual_attrs.contains("hiking"));
        assert!(m.contextual_attrs.contains("yoga"));
    }

    fn arb_ad() -> impl Strategy<Value = Ad> {
        let words = prop::sample::select(vec![
            "shoes", "sneaker", "boot", "trail", "tent", "running", "gym", "red", "fast", "new",
        ]);
        (prop::collection::vec(words.clone(), 1..6), prop::collection::vec(prop::collection::vec(words, 1..6), 1..4))
            .prop_map(|(title, sentences)| {
                let description = sentences.iter().map(|s| format!("{}.", s.join(" "))).collect::<Vec<_>>().join(" ");
                ad(&title.join(" "), &description)
            })
    }

    proptest! {
        #[test]
        fn deterministic_and_bounded(a in arb_ad()) {
            let tax = taxonomy();
            let m1 = extract_rule_based(&a, &tax).unwrap();
            let m2 = extract_rule_based(&a, &tax).unwrap();
            prop_assert_eq!(serde_json::to_vec(&m1).unwrap(), serde_json::to_vec(&m2).unwrap());
            for s in m1.categories.values() {
                prop_assert!(*s > 0.0 && *s <= 1.0);
            }
            prop_assert!(m1.categories.len() <= DEFAULT_MAX_CATEGORIES);
        }

        #[test]
        fn perturbations_keep_semantics(a in arb_ad(), seed in any::<u64>()) {
            let tax = taxonomy();
            let base = extract_rule_based(&a, &tax).unwrap();
            for p in Perturbation::ALL {
                let s = extract_rule_based(&perturb(&a, p, seed), &tax).unwrap();
                prop_assert_eq!(&s.categories, &base.categories);
                prop_assert_eq!(&s.brand_attrs, &base.brand_attrs);
                prop_assert_eq!(&s.product_attrs, &base.product_attrs);
                prop_assert_eq!(&s.contextual_attrs, &base.contextual_attrs);
                match p {
                    Perturbation::TokenAppend => {
                        prop_assert!(base.tokens.is_subset(&s.tokens));
                        prop_assert_eq!(s.tokens.len(), base.tokens.len() + 1);
                    }
                    _ => {
                        prop_assert_eq!(&s.tokens, &base.tokens);
                        prop_assert_eq!(&s.phrases, &base.phrases);
                    }
                }
            }
        }
    }
}
