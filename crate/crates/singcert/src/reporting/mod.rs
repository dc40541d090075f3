//! Run configuration, pipeline orchestration and report emission.

pub mod config;
pub mod pipeline;

pub use config::{BuiltSystem, CoercivitySettings, OutputPaths, RunConfig, Stage, SystemSpec};
pub use pipeline::{
    emit, init_thread_pool, run_check, run_sweep, with_param, OverallVerdict, RunOutput, RunReport, StageRecord,
    StageStatus, StageTiming, SweepParam, Versions, SCHEMA_VERSION,
};
