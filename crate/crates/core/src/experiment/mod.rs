//! Experiment configuration, presets, training/evaluation runs and sweeps.

mod config;
mod runner;
mod sweep;

pub use config::{DatasetConfig, EvalConfig, ExperimentConfig, PartitionConfig, ADULT_DIR_ENV, PRESETS};
pub use runner::{
    assignment, attack_checkpoint, comm_stats, evaluate, load_dataset, prepare, run_experiment, split_accuracy, train,
    EpochStats, Prepared, RunResult, Trained, WallStats,
};
pub use sweep::{apply_axis, run_sweep, sweep_table, sweep_threads, SweepAxis, SweepRow, THREADS_ENV};
