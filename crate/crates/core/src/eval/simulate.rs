//! Deterministic delivery simulator.
//!
//! Each day owns a ChaCha8 stream seeded from (run seed, day). Requests are
//! drawn first, then conversions for every ad that received impressions, in
//! catalog order, from the same stream. Days are independent, so they run in
//! parallel and merge in day order.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AdCatalog, ShadowPair};
use crate::engine::{EngineError, Retriever, RetrieverTag};
use crate::util::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("ad `{0}` is missing from the retriever's snapshot")]
    MissingFromSnapshot(String),
    #[error("retriever returned `{0}`, which is not in the catalog")]
    UnknownCandidate(String),
    #[error("config asks for {expected} but the retriever is {found}")]
    TagMismatch { expected: RetrieverTag, found: RetrieverTag },
    #[error(transparent)]
    Retrieval(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestModel {
    /// Every primary ad is equally likely to be the request seed.
    #[default]
    UniformPrimaries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub days: u32,
    pub requests_per_day: u64,
    pub seed: u64,
    pub retriever_tag: RetrieverTag,
    pub k: usize,
    #[serde(default)]
    pub request_model: RequestModel,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.days == 0 {
            return Err(SimError::InvalidConfig("days must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(SimError::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    pub impressions_p: u64,
    pub impressions_s: u64,
    pub conversions_p: u64,
    pub conversions_s: u64,
    pub revenue_p: f64,
    pub revenue_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDeliveryStats {
    pub pair: ShadowPair,
    pub days: Vec<DayRecord>,
}

impl PairDeliveryStats {
    /// Sums over all days; `day` is the number of days summed.
    pub fn totals(&self) -> DayRecord {
        self.days.iter().fold(DayRecord { day: self.days.len() as u32, ..Default::default() }, |acc, d| DayRecord {
            day: acc.day,
            impressions_p: acc.impressions_p + d.impressions_p,
            impressions_s: acc.impressions_s + d.impressions_s,
            conversions_p: acc.conversions_p + d.conversions_p,
            conversions_s: acc.conversions_s + d.conversions_s,
            revenue_p: acc.revenue_p + d.revenue_p,
            revenue_s: acc.revenue_s + d.revenue_s,
        })
    }
}

/// Whole-catalog totals for one day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DayTotals {
    pub day: u32,
    pub requests: u64,
    pub impressions: u64,
    pub conversions: u64,
    pub revenue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRun {
    pub config: SimulationConfig,
    pub pairs: Vec<PairDeliveryStats>,
    pub daily: Vec<DayTotals>,
}

impl DeliveryRun {
    /// Daily relative impression difference in percent; `None` on days with
    /// no shadow impressions.
    pub fn daily_rel_diff_series(&self) -> Vec<Option<f64>> {
        (0..self.config.days).map(|d| super::metrics::daily_rel_impression_diff(&self.pairs, d)).collect()
    }

    pub fn total_revenue(&self) -> f64 {
        self.daily.iter().map(|d| d.revenue).sum()
    }
}

struct DayDraw {
    rng: ChaCha8Rng,
    /// Requests per primary, indexed like the primaries list.
    counts: Vec<u64>,
}

fn draw_requests(config: &SimulationConfig, day: u32, primaries: usize) -> DayDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, day as u64));
    let mut counts = vec![0u64; primaries];
    if primaries > 0 {
        for _ in 0..config.requests_per_day {
            counts[rng.random_range(0..primaries)] += 1;
        }
    }
    DayDraw { rng, counts }
}

/// Runs the delivery simulation for one retriever.
pub fn simulate_delivery(
    catalog: &AdCatalog,
    retriever: &dyn Retriever,
    config: &SimulationConfig,
) -> Result<DeliveryRun, SimError> {
    config.validate()?;
    if retriever.tag() != config.retriever_tag {
        return Err(SimError::TagMismatch { expected: config.retriever_tag, found: retriever.tag() });
    }
    let primaries: Vec<&str> = catalog.primaries().map(|a| a.ad_id.as_str()).collect();
    for id in catalog
        .pairs()
        .iter()
        .flat_map(|p| [p.primary_id.as_str(), p.shadow_id.as_str()])
        .chain(primaries.iter().copied())
    {
        if !retriever.contains(id) {
            return Err(SimError::MissingFromSnapshot(id.to_string()));
        }
    }

    let draws: Vec<DayDraw> =
        (0..config.days).into_par_iter().map(|d| draw_requests(config, d, primaries.len())).collect();

    // Each distinct request seed is retrieved once.
    let wanted: BTreeSet<usize> =
        draws.iter().flat_map(|d| d.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i)).collect();
    let lists: HashMap<usize, Vec<usize>> = wanted
        .into_par_iter()
        .map(|i| {
            let ranked = retriever.retrieve(primaries[i], config.k)?;
            let positions = ranked
                .ids()
                .map(|id| catalog.position(id).ok_or_else(|| SimError::UnknownCandidate(id.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((i, positions))
        })
        .collect::<Result<_, SimError>>()?;

    let ads = catalog.ads();
    let per_day: Vec<(Vec<u64>, Vec<u64>, DayTotals)> = draws
        .into_par_iter()
        .enumerate()
        .map(|(day, mut draw)| {
            let mut imps = vec![0u64; ads.len()];
            for (i, &c) in draw.counts.iter().enumerate().filter(|(_, &c)| c > 0) {
                for &pos in &lists[&i] {
                    imps[pos] += c;
                }
            }
            let mut convs = vec![0u64; ads.len()];
            let mut totals = DayTotals { day: day as u32, requests: config.requests_per_day, ..Default::default() };
            for (pos, ad) in ads.iter().enumerate() {
                if imps[pos] == 0 {
                    continue;
                }
                let dist = Binomial::new(imps[pos], ad.true_conversion_rate).expect("rate validated on load");
                convs[pos] = dist.sample(&mut draw.rng);
                totals.impressions += imps[pos];
                totals.conversions += convs[pos];
                totals.revenue += convs[pos] as f64 * ad.base_revenue_per_conversion;
            }
            (imps, convs, totals)
        })
        .collect();

    let pairs = catalog
        .pairs()
        .iter()
        .map(|pair| {
            let p = catalog.position(&pair.primary_id).expect("pair registered");
            let s = catalog.position(&pair.shadow_id).expect("pair registered");
            let (rp, rs) = (ads[p].base_revenue_per_conversion, ads[s].base_revenue_per_conversion);
            let days = per_day
                .iter()
                .enumerate()
                .map(|(day, (imps, convs, _))| DayRecord {
                    day: day as u32,
                    impressions_p: imps[p],
                    impressions_s: imps[s],
                    conversions_p: convs[p],
                    conversions_s: convs[s],
                    revenue_p: convs[p] as f64 * rp,
                    revenue_s: convs[s] as f64 * rs,
                })
                .collect();
            PairDeliveryStats { pair: pair.clone(), days }
        })
        .collect();

    Ok(DeliveryRun { config: config.clone(), pairs, daily: per_day.into_iter().map(|(_, _, t)| t).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic_catalog, SynthConfig};
    use crate::engine::{Engine, EngineConfig, RankedCandidates};
    use crate::extract::{RuleExtractor, Taxonomy};
    use crate::graph::GraphParams;

    fn setup() -> (AdCatalog, Engine) {
        let cat = generate_synthetic_catalog(
            &SynthConfig { ads: 60, topics: 6, shadow_fraction: 0.2, ..Default::default() },
            5,
        )
        .unwrap();
        let e = Engine::from_catalog(
            &cat,
            &RuleExtractor::new(Taxonomy::builtin()),
            EngineConfig { k_default: 10, ..Default::default() },
            GraphParams::default(),
        )
        .unwrap();
        (cat, e)
    }

    fn config(tag: RetrieverTag, rpd: u64) -> SimulationConfig {
        SimulationConfig {
            days: 3,
            requests_per_day: rpd,
            seed: 11,
            retriever_tag: tag,
            k: 10,
            request_model: RequestModel::UniformPrimaries,
        }
    }

    #[test]
    fn zero_requests_gives_zero_stats() {
        let (cat, e) = setup();
        let run =
            simulate_delivery(&cat, &e.retriever(RetrieverTag::Semantic).unwrap(), &config(RetrieverTag::Semantic, 0))
                .unwrap();
        assert_eq!(run.pairs.len(), cat.pairs().len());
        assert!(run.pairs.iter().all(|p| p.totals() == DayRecord { day: 3, ..Default::default() }));
        assert!(run.daily.iter().all(|d| d.impressions == 0 && d.revenue == 0.0));
        assert!(run.daily_rel_diff_series().iter().all(Option::is_none));
    }

    #[test]
    fn deterministic_and_conserving() {
        let (cat, e) = setup();
        for tag in RetrieverTag::ALL {
            let r = e.retriever(tag).unwrap();
            let a = simulate_delivery(&cat, &r, &config(tag, 200)).unwrap();
            let b = simulate_delivery(&cat, &r, &config(tag, 200)).unwrap();
            assert_eq!(a, b);
            for d in &a.daily {
                assert!(d.conversions <= d.impressions);
                assert!(d.impressions <= 200 * 10);
            }
            for p in &a.pairs {
                for d in &p.days {
                    assert!(d.conversions_p <= d.impressions_p && d.conversions_s <= d.impressions_s);
                }
            }
        }
    }

    /// Returns a fixed list for every seed.
    struct Fixed(Vec<String>);

    impl Retriever for Fixed {
        fn tag(&self) -> RetrieverTag {
            RetrieverTag::Semantic
        }
        fn contains(&self, _: &str) -> bool {
            true
        }
        fn retrieve(&self, seed_id: &str, k: usize) -> Result<RankedCandidates, EngineError> {
            Ok(RankedCandidates {
                seed_id: seed_id.into(),
                items: self
                    .0
                    .iter()
                    .take(k)
                    .map(|id| crate::engine::Candidate {
                        ad_id: id.clone(),
                        final_score: 1.0,
                        stage1_score: 1.0,
                        stage2_score: 1.0,
                        hop_count: 1,
                    })
                    .collect(),
                k,
                retriever_tag: RetrieverTag::Semantic,
            })
        }
    }

    #[test]
    fn single_request_hits_primary_only() {
        let (cat, _) = setup();
        let pair = cat.pairs()[0].clone();
        let cfg = SimulationConfig { days: 1, requests_per_day: 1, ..config(RetrieverTag::Semantic, 1) };
        let run = simulate_delivery(&cat, &Fixed(vec![pair.primary_id.clone()]), &cfg).unwrap();
        let stats = run.pairs.iter().find(|p| p.pair == pair).unwrap();
        assert_eq!((stats.days[0].impressions_p, stats.days[0].impressions_s), (1, 0));
        assert_eq!(run.daily[0].impressions, 1);
    }

    #[test]
    fn rejects_bad_input() {
        let (cat, e) = setup();
        let r = e.retriever(RetrieverTag::Semantic).unwrap();
        let cfg = SimulationConfig { days: 0, ..config(RetrieverTag::Semantic, 1) };
        assert!(matches!(simulate_delivery(&cat, &r, &cfg), Err(SimError::InvalidConfig(_))));
        let cfg = config(RetrieverTag::Baseline, 1);
        assert!(matches!(simulate_delivery(&cat, &r, &cfg), Err(SimError::TagMismatch { .. })));
        let bogus = Fixed(vec!["nope".into()]);
        assert!(matches!(
            simulate_delivery(&cat, &bogus, &config(RetrieverTag::Semantic, 5)),
            Err(SimError::UnknownCandidate(_))
        ));
    }
}
