//! Experiment orchestration, comparison statistics and report files.

pub mod bundle;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod viz;

pub use bundle::{read_feature_rows, ModelBundle};
pub use config::{DatasetEntry, ExperimentConfig, MethodId, SelectionConfig};
pub use experiment::{
    evaluate_prepared, prepare, run_dataset, run_experiment, DatasetResult, MethodResult, PreparedDataset, RunResult,
};
pub use metrics::{average_ranks, mgi, oracle_accuracy, paired_sign_ttest, sign_outcomes, wins_losses, TTest, WinLoss};
pub use report::{write_outputs, MethodSummary, ResultTable};
pub use viz::{export_viz, Pca};
