//! Configuration, data preparation and the train/evaluate pipelines
//! behind the command-line tool.

pub mod config;
pub mod dataset;
pub mod run;

pub use config::{parse_pairs, Preset, RunConfig, SynthConfig, KEYS};
pub use dataset::{
    assign_splits, featurize, load_cache, parse_manifest, prepare, read_manifest, LoadedData, ManifestRow,
    PrepareReport, Split, SplitAssignment,
};
pub use run::{
    build_learner, check_compatible, evaluate, load_data, run_label, train, training_rng, EvalOutcome, RunManifest, TrainOutcome,
    CHECKPOINT_FILE, CONFIG_FILE, LOSS_LOG_FILE, RECORDS_FILE, RUN_MANIFEST_FILE, SUMMARY_FILE, TABLE_FILE,
    VERSION,
};
