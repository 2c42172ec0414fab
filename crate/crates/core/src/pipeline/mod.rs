//! Orchestration: run configuration, the in-memory experiment, staged
//! commands with hash-chained checkpoints, and multi-seed suites.
//!
//! Stage outputs live under `<root>/<stage>/`, each with a
//! `descriptor.json` recording the config hash it was produced under. A
//! stage refuses to read a prerequisite whose hash differs from the one the
//! current config implies.

mod checkpoint;
mod config;
mod experiment;
mod stages;

pub use checkpoint::{load_mlp, read_fresh, save_mlp, write_descriptor, Descriptor, MlpShape, DESCRIPTOR};
pub use config::{
    env_threads, hash_json, DatasetSource, Mode, RunConfig, TuningConfig, BETA_GRID, ENV_OUTDIR, ENV_THREADS,
};
pub use experiment::{
    baseline_predictions, effective_ase_config, fit_closed, fit_front, fit_generator, known_training_set, learn_ase,
    load_source, make_split, prepare_split, report_for, run_experiment, sub_seed, sub_seeds, train_ase_open, tune,
    tuned_spec, validation_split, variant_open, AseSummary, ExperimentOutcome, Front, StageHashes, Tuning, Validation,
    SUB_SEED_NAMES, VERSION,
};
pub use stages::{
    aggregate_by_method, run_openness_sweep, run_suite, run_suite_in, OpennessRow, Runner, Stage, SuiteOutcome,
};
