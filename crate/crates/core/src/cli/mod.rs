//! Experiment driver behind the `bispot` binary.
//!
//! An [`ExperimentConfig`] (TOML, every field optional) fixes the dataset,
//! seeds, polar grid, metrics, regularizations and solver. The commands
//! write their artifacts under the configured output directory together
//! with a snapshot of the configuration, so any run can be replayed.

mod commands;
mod config;
mod stages;

pub use commands::{
    cmd_diststats, cmd_embed, cmd_evaluate, cmd_mds, cmd_pipeline, cmd_transport, summary_csv,
    DistStatsOutcome, EmbedOutcome, EvaluateArgs, FigureArgs, MdsOutcome, PipelineReport, SummaryRow,
    TransportArgs, SUMMARY_HEADER,
};
pub use config::{
    data_dir, DatasetConfig, EmbeddingConfig, ExperimentConfig, OutputConfig, SplitConfig,
    TransportConfig, DATA_DIR_ENV,
};
pub use stages::{sidecar_path, AccuracyReport, PlanSidecar, SplitInfo};

/// Process exit status for a finished command.
pub const EXIT_OK: i32 = 0;
/// Bad input: missing files, malformed data, invalid parameters.
pub const EXIT_INPUT: i32 = 1;
/// Outputs written, but at least one solve stopped before converging.
pub const EXIT_NOT_CONVERGED: i32 = 2;
