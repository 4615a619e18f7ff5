//! Deterministic synthetic catalogs.
//!
//! Every ad gets one to a few latent topics drawn from the taxonomy; its
//! title and description are templated from those topics' keyword pools plus
//! neutral filler, so a keyword-driven extractor can recover the topics.

use std::collections::BTreeSet;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ad, AdCatalog, CatalogError, Perturbation};
use crate::extract::Taxonomy;

const TITLE_PREFIXES: [&str; 8] = ["Pro", "Top", "Best", "Classic", "Smart", "Everyday", "Ultimate", "Essential"];

/// Sentence templates; `{0}` and `{1}` take keywords, `{b}` the advertiser.
const SENTENCE_TEMPLATES: [&str; 10] = [
    "Discover {0} and {1} from {b}.",
    "Shop quality {0} today.",
    "Our {0} pairs well with {1}.",
    "Explore {0} deals this week!",
    "Customers love the {0}.",
    "Upgrade your {0} and {1} now.",
    "Designed for everyday {0}.",
    "Save on {0} with {b}.",
    "Why wait for {0}?",
    "Compare {0} and {1} side by side.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub ads: usize,
    pub topics: usize,
    pub min_topics_per_ad: usize,
    pub max_topics_per_ad: usize,
    pub shadow_fraction: f64,
    pub advertisers_per_topic: usize,
    /// Perturbations assigned round-robin to the generated shadows.
    pub perturbations: Vec<Perturbation>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            ads: 1000,
            topics: 20,
            min_topics_per_ad: 1,
            max_topics_per_ad: 3,
            shadow_fraction: 0.1,
            advertisers_per_topic: 5,
            perturbations: Perturbation::ALL.to_vec(),
        }
    }
}

impl SynthConfig {
    fn validate(&self, taxonomy: &Taxonomy) -> Result<(), CatalogError> {
        let bad = |m: String| Err(CatalogError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.shadow_fraction) {
            return bad(format!("shadow fraction {} outside [0, 1]", self.shadow_fraction));
        }
        if self.topics == 0 {
            return bad("topic count must be positive".into());
        }
        if self.topics > taxonomy.len() {
            return bad(format!("topic count {} exceeds taxonomy size {}", self.topics, taxonomy.len()));
        }
        if self.min_topics_per_ad == 0 || self.min_topics_per_ad > self.max_topics_per_ad {
            return bad("topics-per-ad range must satisfy 1 <= min <= max".into());
        }
        if self.advertisers_per_topic == 0 {
            return bad("advertisers per topic must be positive".into());
        }
        if self.shadow_fraction > 0.0 && self.perturbations.is_empty() {
            return bad("shadows requested but no perturbations given".into());
        }
        Ok(())
    }
}

/// Topic labels ordered round-robin across top-level groups, so small topic
/// counts still span every group.
fn topic_vocabulary(taxonomy: &Taxonomy) -> Vec<String> {
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for cat in taxonomy.categories() {
        let group = cat.label.split('/').next().unwrap_or("").to_string();
        match groups.iter_mut().find(|(g, _)| *g == group) {
            Some((_, labels)) => labels.push(cat.label.clone()),
            None => groups.push((group, vec![cat.label.clone()])),
        }
    }
    let depth = groups.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
    (0..depth).flat_map(|i| groups.iter().filter_map(move |(_, l)| l.get(i).cloned())).collect()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn render(template: &str, a: &str, b: &str, brand: &str) -> String {
    template.replace("{0}", a).replace("{1}", b).replace("{b}", brand)
}

/// Generates `config.ads` primaries, then appends shadows for a
/// `shadow_fraction` share of them using the built-in taxonomy.
pub fn generate_synthetic_catalog(config: &SynthConfig, seed: u64) -> Result<AdCatalog, CatalogError> {
    generate_with_taxonomy(config, &Taxonomy::builtin(), seed)
}

pub fn generate_with_taxonomy(config: &SynthConfig, taxonomy: &Taxonomy, seed: u64) -> Result<AdCatalog, CatalogError> {
    config.validate(taxonomy)?;
    let topics: Vec<String> = topic_vocabulary(taxonomy).into_iter().take(config.topics).collect();
    let pools: Vec<Vec<&str>> = topics
        .iter()
        .map(|t| taxonomy.get(t).expect("topic comes from taxonomy").keywords.iter().map(String::as_str).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut catalog = AdCatalog::new();
    let width = config.ads.max(1).to_string().len().max(6);

    for i in 0..config.ads {
        let max_t = config.max_topics_per_ad.min(topics.len());
        let min_t = config.min_topics_per_ad.min(max_t);
        let n_topics = rng.random_range(min_t..=max_t);
        let picked: Vec<usize> = index::sample(&mut rng, topics.len(), n_topics).into_vec();
        let main = picked[0];
        let advertiser = format!("adv-{main:02}-{}", rng.random_range(0..config.advertisers_per_topic));

        let mut title_words = vec![TITLE_PREFIXES.choose(&mut rng).unwrap().to_string()];
        let n_title_kw = rng.random_range(2..=3).min(pools[main].len());
        for j in index::sample(&mut rng, pools[main].len(), n_title_kw) {
            title_words.push(capitalize(pools[main][j]));
        }
        if picked.len() > 1 && rng.random_bool(0.5) {
            title_words.push(capitalize(pools[picked[1]].choose(&mut rng).unwrap()));
        }

        let n_sentences = rng.random_range(2..=4);
        let mut sentences = Vec::with_capacity(n_sentences);
        for s in 0..n_sentences {
            // The main topic leads; secondary topics rotate through later sentences.
            let topic = if s == 0 || picked.len() == 1 || rng.random_bool(0.5) {
                main
            } else {
                picked[1 + s % (picked.len() - 1)]
            };
            let a = pools[topic].choose(&mut rng).unwrap();
            let b = pools[topic].choose(&mut rng).unwrap();
            let template = SENTENCE_TEMPLATES.choose(&mut rng).unwrap();
            sentences.push(capitalize(&render(template, a, b, &advertiser)));
        }
        let landing_page_text = rng.random_bool(0.5).then(|| {
            let kw = pools[main].choose(&mut rng).unwrap();
            format!("Shop {kw} deals at {advertiser}.")
        });

        let latent_topics: BTreeSet<String> = picked.iter().map(|&t| topics[t].clone()).collect();
        let ad = Ad {
            ad_id: format!("ad-{i:0width$}"),
            title: title_words.join(" "),
            description: sentences.join(" "),
            landing_page_text,
            advertiser_id: advertiser,
            latent_topics,
            true_conversion_rate: rng.random_range(0.01..0.08),
            base_revenue_per_conversion: rng.random_range(2.0..40.0),
        };
        catalog.insert(ad)?;
    }

    let n_shadows = (config.ads as f64 * config.shadow_fraction).round() as usize;
    let mut chosen = index::sample(&mut rng, config.ads, n_shadows.min(config.ads)).into_vec();
    chosen.sort_unstable();
    for (j, idx) in chosen.into_iter().enumerate() {
        let primary_id = catalog.ads()[idx].ad_id.clone();
        let perturbation = config.perturbations[j % config.perturbations.len()];
        let shadow_seed = rng.random();
        catalog.make_shadow(&primary_id, perturbation, shadow_seed)?;
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_config() {
        let cfg = SynthConfig { ads: 1000, topics: 20, shadow_fraction: 0.1, ..SynthConfig::default() };
        let cat = generate_synthetic_catalog(&cfg, 1).unwrap();
        assert_eq!(cat.len(), 1100);
        assert_eq!(cat.pairs().len(), 100);
        assert_eq!(cat.primaries().count(), 1000);
        let per_tag = |p| cat.pairs().iter().filter(|x| x.perturbation == p).count();
        assert_eq!(per_tag(Perturbation::IdOnly), 34);
        assert_eq!(per_tag(Perturbation::TokenAppend), 33);
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SynthConfig { ads: 200, ..SynthConfig::default() };
        let a = generate_synthetic_catalog(&cfg, 9).unwrap();
        let b = generate_synthetic_catalog(&cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_catalog(&cfg, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_fraction_has_no_pairs() {
        let cfg = SynthConfig { ads: 50, shadow_fraction: 0.0, ..SynthConfig::default() };
        let cat = generate_synthetic_catalog(&cfg, 1).unwrap();
        assert_eq!(cat.len(), 50);
        assert!(cat.pairs().is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let bad_fraction = SynthConfig { shadow_fraction: 1.5, ..SynthConfig::default() };
        assert!(matches!(generate_synthetic_catalog(&bad_fraction, 1), Err(CatalogError::InvalidConfig(_))));
        let no_topics = SynthConfig { topics: 0, ..SynthConfig::default() };
        assert!(generate_synthetic_catalog(&no_topics, 1).is_err());
    }

    #[test]
    fn topics_span_groups() {
        let tax = Taxonomy::builtin();
        let vocab = topic_vocabulary(&tax);
        assert_eq!(vocab.len(), tax.len());
        let groups: BTreeSet<_> = vocab[..8].iter().map(|l| l.split('/').next().unwrap()).collect();
        assert_eq!(groups.len(), 8);
    }

    #[test]
    fn filler_is_not_a_keyword() {
        let tax = Taxonomy::builtin();
        let mut filler = BTreeSet::new();
        for t in SENTENCE_TEMPLATES.iter().chain(TITLE_PREFIXES.iter()) {
            filler.extend(crate::extract::tokenize(&render(t, "", "", "adv-01-2")));
        }
        filler.extend(crate::extract::tokenize("Shop deals at"));
        for w in &filler {
            assert!(tax.categories().iter().all(|c| !c.keywords.contains(w)), "{w}");
        }
    }
}
