//! Metrics, experiment runners and studies.

mod metrics;
mod runner;
mod studies;

pub use metrics::{accuracy, argmax_rows, f1_score, macro_f1, mean_std, weighted_f1, F1Average};
pub use runner::{
    fingerprint, run_ablation, run_inductive, run_inductive_timed, run_split, run_transductive,
    run_transductive_timed,
    split_seed, AblationReport, EvalReport, PhaseTimings, RunOptions, SeedResult,
};
pub use studies::{
    filter_sweep_study, logistic_probe, ratio_split, weight_case_study, SweepCell, SweepConfig, SweepTable,
    WeightRow,
};
