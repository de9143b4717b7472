//! PAD and integrated-matching evaluation.

mod integrated;
mod pad;
mod report;
mod scores;

pub use integrated::{integrated_rates, AcceptRule, ComparisonTrial, IntegratedRates, TrialKind};
pub use pad::{
    auc, candidate_thresholds, choose_threshold, pad_rates, roc_points, OperatingPoint, PadRates, PadTrialSet,
    ThresholdPolicy,
};
pub use report::{
    ablation_csv, ablation_table, accuracy_table, bench_table, AblationRow, AccuracyRow, BenchRow, IntegratedOperating,
    MetricReport, PadOperating,
};
pub use scores::{ScoreFile, ScoreRow, COMPARISON_COMPONENTS};
