//! Evaluation, normalized reports, progress curves and the experiment runner.

mod evaluate;
mod experiment;
mod report;

pub use evaluate::{evaluate_model, mean_loss, LossRecord};
pub use experiment::{
    load_run_config, run_experiment, run_experiment_with, write_experiment, DatasetSource, ExperimentOutcome,
    RunConfig, SeedCurve,
};
pub use report::{
    bootstrap_ci, curve_csv, emit_reports, format_sig6, load_report, normal_ci, normalized_report,
    progress_bin, report_csv, timestep_curve, CiMethod, CiSettings, CurveReport, CurveRow, EvalReport,
    ModelKey, ReportFile, ReportRow, SeedRecords,
};
