//! Metrics and the evaluation protocol.

pub mod contrast;
pub mod metrics;
pub mod report;
pub mod resample;

pub use contrast::{behavior_contrast, contrast_csv, stars, welch_t, FeatureContrast, WelchTest};
pub use metrics::{auc, mann_whitney_u2, predict_label, roc_points, ConfusionMatrix, THRESHOLD};
pub use report::{confusion_csv, sweep_csv, sweep_grid, sweep_table, SweepCell};
pub use resample::{balanced_partition, balanced_resample_eval, EvalReport, Partition};
