//! Staged end-to-end run: dataset, FEM labels, GAN, regressors, search,
//! verification, sampling comparison and report. Each stage writes into its
//! own directory under the output root together with a run manifest.

mod config;
mod manifest;
mod stages;

pub use config::{DatasetStage, FemStage, PipelineConfig, Profile, SearchStage};
pub use manifest::{
    hash_file, list_files, read_run_manifest, sha256_hex, RunManifest, Stage, StageStatus, RUN_MANIFEST, TOOL_VERSION,
};
pub use stages::{
    cmd_compare_sampling, cmd_fem_batch, cmd_gen_dataset, cmd_report, cmd_search, cmd_train_cnn, cmd_train_gan,
    cmd_verify, compare_prediction, fem_subset, load_models, matched_fraction, read_labels, run_all, search_report,
    verify_markdown, worker_count, FractionRow, R2Row, SearchSummary, VerifyReport, CNN, COMPARE, DATASET, FEM, GAN,
    REPORT, SEARCH, VERIFY,
};
