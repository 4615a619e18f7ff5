//! Predictability and recall metrics. All functions are pure.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashSet};

use super::simulate::PairDeliveryStats;

/// One-sided 90% Gaussian quantile used by the significance bound.
pub const Z_90: f64 = 1.65;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("series is empty")]
    EmptySeries,
    #[error("no pair has a defined value and positive weight")]
    NoDefinedPairs,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("relevant set is empty")]
    EmptyRelevant,
}

/// Exceedance of the relative conversion difference over its 90% bound.
///
/// `None` when both counts are zero: the bound is infinite there.
pub fn stat_sig_diff_pair(conv_p: u64, conv_s: u64) -> Option<f64> {
    let total = conv_p as f64 + conv_s as f64;
    if total == 0.0 {
        return None;
    }
    let delta = (conv_p as f64 - conv_s as f64).abs() / (total / 2.0);
    Some((delta - Z_90 * (2.0 / total).sqrt()).max(0.0))
}

/// Weighted mean of per-pair values with weights sqrt(revenue sum).
/// Zero-weight entries are skipped.
pub fn weighted_stat_sig_diff(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64, MetricError> {
    let (mut num, mut den) = (0.0, 0.0);
    for (value, revenue) in pairs {
        let w = revenue.max(0.0).sqrt();
        if w > 0.0 {
            num += value * w;
            den += w;
        }
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(MetricError::NoDefinedPairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStatSig {
    pub value: f64,
    pub defined_pairs: usize,
    /// Pairs with zero conversions on both sides.
    pub undefined_pairs: usize,
}

pub fn aggregate_stat_sig_diff(stats: &[PairDeliveryStats]) -> Result<AggregateStatSig, MetricError> {
    let mut defined = Vec::new();
    let mut undefined_pairs = 0;
    for s in stats {
        let t = s.totals();
        match stat_sig_diff_pair(t.conversions_p, t.conversions_s) {
            Some(v) => defined.push((v, t.revenue_p + t.revenue_s)),
            None => undefined_pairs += 1,
        }
    }
    let defined_pairs = defined.len();
    Ok(AggregateStatSig { value: weighted_stat_sig_diff(defined)?, defined_pairs, undefined_pairs })
}

/// Σ primary / Σ shadow impressions − 100%, in percent. `None` when the
/// shadow side is zero.
pub fn rel_impression_diff(primary: u64, shadow: u64) -> Option<f64> {
    (shadow > 0).then(|| (primary as f64 / shadow as f64 - 1.0) * 100.0)
}

pub fn daily_rel_impression_diff(stats: &[PairDeliveryStats], day: u32) -> Option<f64> {
    let (mut p, mut s) = (0u64, 0u64);
    for rec in stats.iter().filter_map(|st| st.days.iter().find(|d| d.day == day)) {
        p += rec.impressions_p;
        s += rec.impressions_s;
    }
    rel_impression_diff(p, s)
}

/// Median; even lengths average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Median absolute deviation from the median.
pub fn mad(series: &[f64]) -> Result<f64, MetricError> {
    let m = median(series).ok_or(MetricError::EmptySeries)?;
    let dev: Vec<f64> = series.iter().map(|x| (x - m).abs()).collect();
    Ok(median(&dev).expect("non-empty"))
}

fn top<S: Borrow<str>>(list: &[S], k: usize) -> HashSet<&str> {
    list.iter().take(k).map(Borrow::borrow).collect()
}

/// |top-k ∩ relevant| / |relevant|.
pub fn recall_at_k<S: Borrow<str>>(retrieved: &[S], relevant: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if relevant.is_empty() {
        return Err(MetricError::EmptyRelevant);
    }
    let hits = top(retrieved, k).into_iter().filter(|id| relevant.contains(*id)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// (|L ∩ B| / k, |(L \ B) ∩ relevant| / |relevant|) over the top-k of each
/// list. Shorter lists are used as they are.
pub fn alignment_and_incremental<S: Borrow<str>, T: Borrow<str>>(
    llm: &[S],
    baseline: &[T],
    relevant: &BTreeSet<String>,
    k: usize,
) -> Result<(f64, f64), MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if relevant.is_empty() {
        return Err(MetricError::EmptyRelevant);
    }
    let l = top(llm, k);
    let b = top(baseline, k);
    let shared = l.intersection(&b).count();
    let novel = l.difference(&b).filter(|id| relevant.contains(**id)).count();
    Ok((shared as f64 / k as f64, novel as f64 / relevant.len() as f64))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-12)
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pair_examples() {
        assert_eq!(stat_sig_diff_pair(100, 100), Some(0.0));
        let v = stat_sig_diff_pair(150, 50).unwrap();
        assert!(close(v, 1.0 - 1.65 * (2.0f64 / 200.0).sqrt()), "{v}");
        assert!(close(v, 0.835));
        assert_eq!(stat_sig_diff_pair(3, 2), Some(0.0));
        assert_eq!(stat_sig_diff_pair(0, 0), None);
    }

    #[test]
    fn aggregate_examples() {
        assert!(close(weighted_stat_sig_diff([(0.2, 50.0), (0.4, 50.0)]).unwrap(), 0.3));
        let v = weighted_stat_sig_diff([(0.2, 100.0), (0.0, 400.0)]).unwrap();
        assert!(close(v, 2.0 / 30.0), "{v}");
        assert!(close(weighted_stat_sig_diff([(0.7, 9.0)]).unwrap(), 0.7));
        assert_eq!(weighted_stat_sig_diff([(0.7, 0.0)]), Err(MetricError::NoDefinedPairs));
        assert_eq!(weighted_stat_sig_diff([]), Err(MetricError::NoDefinedPairs));
    }

    #[test]
    fn rel_diff_examples() {
        assert_eq!(rel_impression_diff(1000, 1000), Some(0.0));
        assert!(close(rel_impression_diff(1100, 1000).unwrap(), 10.0));
        assert!(close(rel_impression_diff(900, 1000).unwrap(), -10.0));
        assert_eq!(rel_impression_diff(5, 0), None);
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&[3.0, 3.0, 3.0]), Ok(0.0));
        assert!(close(mad(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 1.0));
        assert_eq!(mad(&[7.5]), Ok(0.0));
        assert_eq!(mad(&[]), Err(MetricError::EmptySeries));
    }

    #[test]
    fn recall_examples() {
        let rel = set(&["a", "b", "c", "d"]);
        assert_eq!(recall_at_k(&["a", "b", "c", "d", "e"], &rel, 5), Ok(1.0));
        assert_eq!(recall_at_k(&["x", "y"], &rel, 5), Ok(0.0));
        assert_eq!(recall_at_k(&["a", "x", "c", "y"], &rel, 4), Ok(0.5));
        assert_eq!(recall_at_k(&["a"], &BTreeSet::new(), 4), Err(MetricError::EmptyRelevant));
        assert_eq!(recall_at_k(&["a"], &rel, 0), Err(MetricError::InvalidK));
    }

    #[test]
    fn alignment_examples() {
        let rel = set(&["a", "b", "c", "d", "e"]);
        let l = ["a", "b", "c", "d", "e"];
        assert_eq!(alignment_and_incremental(&l, &l, &rel, 5), Ok((1.0, 0.0)));
        let base = ["v", "w", "x", "y", "z"];
        assert_eq!(alignment_and_incremental(&l, &base, &rel, 5), Ok((0.0, 1.0)));

        // 3 shared, 1 novel relevant item out of 4 relevant.
        let llm = ["s1", "s2", "s3", "n1", "n2"];
        let base = ["s1", "s2", "s3", "b1", "b2"];
        let rel = set(&["n1", "b1", "q1", "q2"]);
        assert_eq!(alignment_and_incremental(&llm, &base, &rel, 5), Ok((0.6, 0.25)));
    }

    proptest! {
        #[test]
        fn pair_invariants(a in 0u64..5000, b in 0u64..5000, scale in 2u64..20) {
            match stat_sig_diff_pair(a, b) {
                None => prop_assert!(a == 0 && b == 0),
                Some(v) => {
                    prop_assert!(v >= 0.0);
                    prop_assert_eq!(Some(v), stat_sig_diff_pair(b, a));
                    if a == b {
                        prop_assert_eq!(v, 0.0);
                    }
                    // Same Δ, more conversions: the bound shrinks.
                    let bigger = stat_sig_diff_pair(a * scale, b * scale).unwrap();
                    prop_assert!(bigger + 1e-12 >= v);
                }
            }
        }

        #[test]
        fn aggregate_within_range_and_scale_free(
            pairs in prop::collection::vec((0.0f64..2.0, 0.1f64..1e4), 1..20),
            c in 0.01f64..100.0,
        ) {
            let v = weighted_stat_sig_diff(pairs.iter().copied()).unwrap();
            let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            let scaled = weighted_stat_sig_diff(pairs.iter().map(|&(x, r)| (x, r * c))).unwrap();
            prop_assert!((scaled - v).abs() <= 1e-9 * v.abs().max(1e-9));
        }

        #[test]
        fn mad_translation_and_scale(series in prop::collection::vec(-100.0f64..100.0, 1..30), t in -50.0f64..50.0, c in 0.1f64..10.0) {
            let m = mad(&series).unwrap();
            let shifted: Vec<f64> = series.iter().map(|x| x + t).collect();
            let scaled: Vec<f64> = series.iter().map(|x| x * c).collect();
            prop_assert!((mad(&shifted).unwrap() - m).abs() <= 1e-9);
            prop_assert!((mad(&scaled).unwrap() - c * m).abs() <= 1e-9 * (1.0 + c * m));
        }

        #[test]
        fn recall_monotone_in_k(order in Just((0..30).map(|i| format!("x{i}")).collect::<Vec<_>>()).prop_shuffle(), rel in prop::collection::btree_set(0usize..30, 1..10)) {
            let rel: BTreeSet<String> = rel.into_iter().map(|i| format!("x{i}")).collect();
            let mut prev = 0.0;
            for k in 1..=30 {
                let r = recall_at_k(&order, &rel, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r >= prev);
                prev = r;
                prop_assert_eq!(alignment_and_incremental(&order, &order, &rel, k).unwrap(), ((k.min(30)) as f64 / k as f64, 0.0));
            }
        }
    }
}
