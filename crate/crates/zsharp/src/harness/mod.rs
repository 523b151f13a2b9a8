//! Experiment harness: configured training runs with metric capture,
//! qp sweeps and method comparisons with seed aggregation, sharpness
//! probes, and empirical convergence diagnostics.

mod config;
mod report;
mod theory;
mod train;

pub use config::{
    parse_config_text, resolve_run_config, BaseOptKind, BaseSpec, ConfigError, DataSource,
    DatasetSpec, MethodSpec, RunConfig, CONFIG_KEY_HELP,
};
pub use report::{
    aggregate, compare_methods, manifest_string, metrics_csv_string, param_hash,
    shared_config_hash, sweep_qp, with_worker_pool, write_manifest, write_metrics_csv, Aggregate,
    CellResult, CompareCell, CompareRow, CompareTable, MethodName, SweepRow, SweepTable,
    METRICS_CSV_HEADER,
};
pub use theory::{
    verify_convergence_bound, verify_diminishing_steps, AscentVariant, ConvergenceReport,
    DecaySchedule, DiminishingStepReport,
};
pub use train::{
    prepare_data, sharpness_probe, sharpness_probe_with, train, train_accuracy, EpochMetrics,
    RunResult, RunSummary,
};

use crate::data::DataError;
use crate::model::ModelError;
use crate::opt::OptError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("numerical divergence at epoch {epoch} step {step}")]
    Diverged {
        epoch: usize,
        step: usize,
        partial: Box<RunResult>,
    },
    #[error("{message}")]
    Precondition { message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
