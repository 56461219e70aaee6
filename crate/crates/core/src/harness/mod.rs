//! Experiment harness: task streams, runs, sweeps and reports.

pub mod config;
pub mod experiment;
pub mod report;
pub mod stream;
pub mod sweep;
pub mod synth;

pub use config::{
    load_config, load_grid, Capacity, DataSource, ExperimentConfig, StatsSource, WeightsSource,
};
pub use experiment::{
    class_count, fill_memory, fit_head, load_inputs, resolve_slots, run_experiment,
    run_with_inputs, Inputs, ResultRow, RunOutcome,
};
pub use report::{emit_report, summarize, XAxis};
pub use stream::{build_task_stream, OnlineSource, SampleSource, Task, TaskStream};
pub use sweep::{read_csv, run_sweep, write_csv};
pub use synth::{generate, SynthData, SynthSpec};
