//! A/A′ delivery simulation and the metric suite.

pub mod metrics;
pub mod report;
pub mod simulate;

pub use metrics::{
    aggregate_stat_sig_diff, alignment_and_incremental, daily_rel_impression_diff, mad, median, recall_at_k,
    rel_impression_diff, stat_sig_diff_pair, weighted_stat_sig_diff, AggregateStatSig, MetricError, Z_90,
};
pub use report::{
    evaluate_dir, evaluate_runs, metric_report, record_run, relevant_set, run_report, MetricReport, ReportConfig,
    ReportError, RunRecord, Summary, TABLE_KS,
};
pub use simulate::{
    simulate_delivery, DayRecord, DayTotals, DeliveryRun, PairDeliveryStats, RequestModel, SimError, SimulationConfig,
};
