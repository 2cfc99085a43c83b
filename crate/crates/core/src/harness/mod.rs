//! Experiment runner: config parsing, the epoch loop, metrics and run comparison.

pub mod compare;
pub mod config;
pub mod metrics;
pub mod run;

pub use compare::{compare_runs, CompareReport};
pub use config::{parse_config, DataFormat, ModelKind, OptimizerKind, RunConfig};
pub use metrics::{
    evaluate_predictive, predictive_log2_loss, predictive_log2_loss_quadrature, PredictiveMetrics,
};
pub use run::{
    read_trace, run, run_collect, write_trace, RunOutput, RunSummary, TraceRecord, TRACE_COLUMNS,
    TRACE_SCHEMA,
};
