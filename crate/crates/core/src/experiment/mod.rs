//! Corpus build, pretraining, the three-system comparison across noise
//! levels, and report emission.

mod config;
mod data;
pub mod report;
mod run;

pub use config::{CorpusSize, ExperimentConfig, TrainingMode};
pub use data::{frames_to_matrix, FeatureStore};
pub use report::{export_curves, Metric};
pub use run::{
    run_experiment, Cell, CellRecord, Experiment, Failure, Prepared, RunManifest, SeedRecord,
    Timing, CONFIG_SNAPSHOT, MANIFEST_FILE, PRETRAIN_RECORD, THETA_A_FILE, THETA_R_FILE,
};
