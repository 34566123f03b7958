//! Config-driven ε-sweeps, metrics and report files.

mod config;
mod metrics;
mod report;
mod sweep;

pub use config::{DatasetSource, ExperimentConfig, ModelFamily, DEFAULT_EPSILONS};
pub use metrics::{adversarial_accuracy, metric_cost, metric_validity, monotone_with_tolerance};
pub use report::{
    adv_accuracy_column, emit_report, read_results, seed_means, summary_json, write_bounds_csv,
    write_results_csv, ReportPaths, MONOTONE_TOLERANCE, TOOL_NAME, TOOL_VERSION,
};
pub use sweep::{
    load_run_data, negative_indices, recourse_instance, run_sweep, train_family, vae_config_for,
    BoundRecord, CellSummary, ConditionRecord, LinearWeightGap, ResultRow, SweepReport,
};
