//! Run records, metric reports and on-disk outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_stat_sig_diff, alignment_and_incremental, mad, recall_at_k, stat_sig_diff_pair};
use super::simulate::{simulate_delivery, DeliveryRun, RequestModel, SimError, SimulationConfig};
use crate::catalog::AdCatalog;
use crate::engine::{EngineError, Retriever, RetrieverTag};

/// Cutoffs for recall, alignment and incremental recall.
pub const TABLE_KS: [usize; 5] = [5, 10, 50, 100, 200];

pub const REPORT_CSV: &str = "report.csv";
pub const DAILY_CSV: &str = "daily_series.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const PLOT_TSV: &str = "daily_rel_diff.tsv";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("no {0} run found")]
    MissingRun(RetrieverTag),
    #[error("runs disagree on {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Retrieval(#[from] EngineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// Top-`k_max` list of one seed with per-item relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedList {
    pub ids: Vec<String>,
    /// One `0`/`1` per id.
    pub relevant_mask: String,
    pub relevant_total: usize,
}

/// Ads sharing at least one latent topic with `seed`, excluding the seed.
pub fn relevant_set(catalog: &AdCatalog, seed: &str) -> BTreeSet<String> {
    let Some(s) = catalog.get(seed) else {
        return BTreeSet::new();
    };
    catalog
        .ads()
        .iter()
        .filter(|a| a.ad_id != seed && !a.latent_topics.is_disjoint(&s.latent_topics))
        .map(|a| a.ad_id.clone())
        .collect()
}

/// Ranked lists for every primary ad with a non-empty relevant set.
pub fn seed_lists(
    catalog: &AdCatalog,
    retriever: &dyn Retriever,
    k_max: usize,
) -> Result<BTreeMap<String, SeedList>, ReportError> {
    let seeds: Vec<&str> = catalog.primaries().map(|a| a.ad_id.as_str()).collect();
    seeds
        .into_par_iter()
        .filter_map(|seed| {
            let relevant = relevant_set(catalog, seed);
            if relevant.is_empty() {
                return None;
            }
            let out = retriever.retrieve(seed, k_max).map(|r| {
                let ids: Vec<String> = r.ids().map(str::to_string).collect();
                let relevant_mask = ids.iter().map(|id| if relevant.contains(id) { '1' } else { '0' }).collect();
                (seed.to_string(), SeedList { ids, relevant_mask, relevant_total: relevant.len() })
            });
            Some(out.map_err(ReportError::from))
        })
        .collect()
}

/// Everything `evaluate` needs from one simulated arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub retriever_tag: RetrieverTag,
    pub snapshot_hash: Option<String>,
    pub run: DeliveryRun,
    pub seed_lists: BTreeMap<String, SeedList>,
}

impl RunRecord {
    pub fn file_name(tag: RetrieverTag) -> String {
        format!("run_{tag}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ReportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(Self::file_name(self.retriever_tag));
        let text = serde_json::to_string(self).expect("run record serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Format { path: path.to_path_buf(), reason: e.to_string() })
    }
}

/// Simulates one arm and collects its ranked lists.
pub fn record_run(
    catalog: &AdCatalog,
    retriever: &dyn Retriever,
    config: &SimulationConfig,
    snapshot_hash: Option<String>,
) -> Result<RunRecord, ReportError> {
    let run = simulate_delivery(catalog, retriever, config)?;
    let k_max = *TABLE_KS.iter().max().expect("non-empty");
    Ok(RunRecord {
        retriever_tag: retriever.tag(),
        snapshot_hash,
        run,
        seed_lists: seed_lists(catalog, retriever, k_max)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub retriever_tag: RetrieverTag,
    /// `None` when no pair has a defined value.
    pub aggregate_stat_sig_diff: Option<f64>,
    pub defined_pairs: usize,
    pub undefined_pairs: usize,
    /// Percent per day; `None` on days without shadow impressions.
    pub daily_rel_diff_series: Vec<Option<f64>>,
    /// Over the defined days; `None` if there are none.
    pub mad: Option<f64>,
    pub recall_at_k: BTreeMap<usize, f64>,
    /// Against the baseline arm's lists (1.0 for the baseline itself).
    pub alignment_ratio: BTreeMap<usize, f64>,
    pub incremental_recall: BTreeMap<usize, f64>,
    /// Simulated conversion value over all ads and days.
    pub topline_revenue: f64,
    pub total_impressions: u64,
    pub total_conversions: u64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn relevant_of(list: &SeedList) -> BTreeSet<String> {
    // Items outside the stored top list are stand-ins: only the count
    // matters for the denominators below.
    let mut rel: BTreeSet<String> =
        list.ids.iter().zip(list.relevant_mask.chars()).filter(|(_, m)| *m == '1').map(|(id, _)| id.clone()).collect();
    let mut filler = 0usize;
    while rel.len() < list.relevant_total {
        rel.insert(format!("\u{0}unlisted-{filler}"));
        filler += 1;
    }
    rel
}

pub fn metric_report(record: &RunRecord, baseline: &RunRecord) -> MetricReport {
    let run = &record.run;
    let (aggregate, defined, undefined) = match aggregate_stat_sig_diff(&run.pairs) {
        Ok(a) => (Some(a.value), a.defined_pairs, a.undefined_pairs),
        Err(_) => (None, 0, run.pairs.len()),
    };
    let series = run.daily_rel_diff_series();
    let defined_days: Vec<f64> = series.iter().flatten().copied().collect();

    let mut recall = BTreeMap::new();
    let mut alignment = BTreeMap::new();
    let mut incremental = BTreeMap::new();
    for k in TABLE_KS {
        let (mut r, mut a, mut inc) = (Vec::new(), Vec::new(), Vec::new());
        for (seed, list) in &record.seed_lists {
            let rel = relevant_of(list);
            r.push(recall_at_k(&list.ids, &rel, k).expect("relevant non-empty"));
            if let Some(base) = baseline.seed_lists.get(seed) {
                let (al, ic) = alignment_and_incremental(&list.ids, &base.ids, &rel, k).expect("k >= 1");
                a.push(al);
                inc.push(ic);
            }
        }
        recall.insert(k, mean(&r));
        alignment.insert(k, mean(&a));
        incremental.insert(k, mean(&inc));
    }

    MetricReport {
        retriever_tag: record.retriever_tag,
        aggregate_stat_sig_diff: aggregate,
        defined_pairs: defined,
        undefined_pairs: undefined,
        daily_rel_diff_series: series,
        mad: mad(&defined_days).ok(),
        recall_at_k: recall,
        alignment_ratio: alignment,
        incremental_recall: incremental,
        topline_revenue: run.total_revenue(),
        total_impressions: run.daily.iter().map(|d| d.impressions).sum(),
        total_conversions: run.daily.iter().map(|d| d.conversions).sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// 1 − semantic / baseline.
    pub stat_sig_diff_reduction: Option<f64>,
    pub mad_reduction: Option<f64>,
    /// semantic / baseline − 1.
    pub topline_lift: Option<f64>,
    pub recall_gain: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub simulation: SimulationConfig,
    pub pairs: usize,
    pub semantic: MetricReport,
    pub baseline: MetricReport,
    pub deltas: Deltas,
}

fn reduction(sem: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (sem, base) {
        (Some(s), Some(b)) if b > 0.0 => Some(1.0 - s / b),
        _ => None,
    }
}

/// Computes reports for both arms and writes all output files into `out`.
pub fn evaluate_runs(semantic: &RunRecord, baseline: &RunRecord, out: &Path) -> Result<Summary, ReportError> {
    if semantic.retriever_tag != RetrieverTag::Semantic {
        return Err(ReportError::MissingRun(RetrieverTag::Semantic));
    }
    if baseline.retriever_tag != RetrieverTag::Baseline {
        return Err(ReportError::MissingRun(RetrieverTag::Baseline));
    }
    let (sc, bc) = (&semantic.run.config, &baseline.run.config);
    if (sc.days, sc.requests_per_day, sc.seed, sc.k) != (bc.days, bc.requests_per_day, bc.seed, bc.k) {
        return Err(ReportError::Inconsistent("simulation settings".into()));
    }
    let pair_ids = |r: &RunRecord| r.run.pairs.iter().map(|p| p.pair.pair_id()).collect::<Vec<_>>();
    if pair_ids(semantic) != pair_ids(baseline) {
        return Err(ReportError::Inconsistent("pair sets".into()));
    }

    let sem = metric_report(semantic, baseline);
    let base = metric_report(baseline, baseline);
    let deltas = Deltas {
        stat_sig_diff_reduction: reduction(sem.aggregate_stat_sig_diff, base.aggregate_stat_sig_diff),
        mad_reduction: reduction(sem.mad, base.mad),
        topline_lift: (base.topline_revenue > 0.0).then(|| sem.topline_revenue / base.topline_revenue - 1.0),
        recall_gain: TABLE_KS.iter().map(|k| (*k, sem.recall_at_k[k] - base.recall_at_k[k])).collect(),
    };
    let summary = Summary {
        simulation: SimulationConfig { retriever_tag: RetrieverTag::Semantic, ..sc.clone() },
        pairs: semantic.run.pairs.len(),
        semantic: sem,
        baseline: base,
        deltas,
    };
    write_outputs(&summary, semantic, baseline, out)?;
    Ok(summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ReportError + '_ {
    move |e| ReportError::Format { path: path.to_path_buf(), reason: e.to_string() }
}

/// Writes into a staging directory inside `out`, then renames into place,
/// so a failure leaves no partial outputs behind.
fn write_outputs(summary: &Summary, semantic: &RunRecord, baseline: &RunRecord, out: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(out).map_err(io_err(out))?;
    let stage = staging.path();

    let path = stage.join(REPORT_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record([
        "pair_id",
        "retriever",
        "perturbation",
        "imp_p",
        "imp_s",
        "conv_p",
        "conv_s",
        "rev_p",
        "rev_s",
        "stat_sig_diff",
    ])
    .map_err(csv_err(&path))?;
    for rec in [semantic, baseline] {
        for p in &rec.run.pairs {
            let t = p.totals();
            w.write_record([
                p.pair.pair_id(),
                rec.retriever_tag.to_string(),
                p.pair.perturbation.to_string(),
                t.impressions_p.to_string(),
                t.impressions_s.to_string(),
                t.conversions_p.to_string(),
                t.conversions_s.to_string(),
                t.revenue_p.to_string(),
                t.revenue_s.to_string(),
                fmt_opt(stat_sig_diff_pair(t.conversions_p, t.conversions_s)),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = stage.join(DAILY_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["day", "semantic_rel_diff_pct", "baseline_rel_diff_pct", "semantic_revenue", "baseline_revenue"])
        .map_err(csv_err(&path))?;
    let mut plot = String::from("# day\tsemantic_rel_diff_pct\tbaseline_rel_diff_pct\n");
    let (ss, bs) = (&summary.semantic.daily_rel_diff_series, &summary.baseline.daily_rel_diff_series);
    for day in 0..ss.len() {
        w.write_record([
            day.to_string(),
            fmt_opt(ss[day]),
            fmt_opt(bs[day]),
            semantic.run.daily[day].revenue.to_string(),
            baseline.run.daily[day].revenue.to_string(),
        ])
        .map_err(csv_err(&path))?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NaN".into());
        plot.push_str(&format!("{day}\t{}\t{}\n", cell(ss[day]), cell(bs[day])));
    }
    w.flush().map_err(io_err(&path))?;

    let path = stage.join(PLOT_TSV);
    fs::write(&path, plot).map_err(io_err(&path))?;

    let path = stage.join(SUMMARY_JSON);
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;

    // summary.json goes last: its presence marks a complete report.
    for name in [REPORT_CSV, DAILY_CSV, PLOT_TSV, SUMMARY_JSON] {
        let dest = out.join(name);
        fs::rename(stage.join(name), &dest).map_err(io_err(&dest))?;
    }
    Ok(())
}

/// Settings shared by both arms of a report run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub days: u32,
    pub requests_per_day: u64,
    pub k: usize,
    pub seed: u64,
}

impl ReportConfig {
    pub fn simulation(&self, tag: RetrieverTag) -> SimulationConfig {
        SimulationConfig {
            days: self.days,
            requests_per_day: self.requests_per_day,
            seed: self.seed,
            retriever_tag: tag,
            k: self.k,
            request_model: RequestModel::UniformPrimaries,
        }
    }
}

/// Simulates both arms with identical seeds, evaluates them and writes the
/// report files. Nothing is written if any step fails.
pub fn run_report(
    catalog: &AdCatalog,
    semantic: &dyn Retriever,
    baseline: &dyn Retriever,
    config: &ReportConfig,
    out: &Path,
) -> Result<Summary, ReportError> {
    let sem = record_run(catalog, semantic, &config.simulation(RetrieverTag::Semantic), None)?;
    let base = record_run(catalog, baseline, &config.simulation(RetrieverTag::Baseline), None)?;
    evaluate_runs(&sem, &base, out)
}

/// Reads `run_semantic.json` and `run_baseline.json` from `runs`.
pub fn evaluate_dir(runs: &Path, out: &Path) -> Result<Summary, ReportError> {
    let read = |tag: RetrieverTag| {
        let path = runs.join(RunRecord::file_name(tag));
        if !path.exists() {
            return Err(ReportError::MissingRun(tag));
        }
        RunRecord::read(&path)
    };
    let sem = read(RetrieverTag::Semantic)?;
    let base = read(RetrieverTag::Baseline)?;
    evaluate_runs(&sem, &base, out)
}
