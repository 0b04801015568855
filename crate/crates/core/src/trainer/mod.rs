//! Pretraining, the joint adversarial schedule, ablation presets,
//! mode-collapse diagnostics and run checkpoints.

mod adam;
mod config;
mod data;
mod diagnostics;
mod grid;
mod run;
mod state;
mod train;

use std::path::PathBuf;

pub use adam::Adam;
pub use config::{apply_ablation, Ablation, AdamConfig, DataConfig, LossVariant, Objective, TrainConfig};
pub use data::{Batch, TrainData};
pub use diagnostics::{
    bhattacharyya, collapse_diagnostics, score_overlap, shared_histograms, super_resolve_test, test_reports, CollapseDiagnostics,
    Histogram, HISTOGRAM_BINS, MIN_DIAGNOSTIC_BATCH,
};
pub use grid::{grid_search, GridPoint, WeightGrid};
pub use run::{checkpoint_dir, run_training, write_diagnostics, RunOptions};
pub use state::{checkpoint, curves_from_csv, curves_to_csv, restore, CURVE_HEADER};
pub use train::{
    critic_features, critic_scores, diversity, joint_train, joint_train_until, pretrain, pretrain_until, score_margin,
    super_resolve_tensor, train_critic, CurveRow, TrainState,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("ablation model {0} does not exist; expected 1 to 5")]
    Ablation(u8),
    #[error("no training data")]
    EmptyData,
    #[error("training diverged at iteration {iter}: non-finite {what}")]
    Diverged { iter: usize, what: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Shape(#[from] hsisr_tensor::ShapeError),
    #[error(transparent)]
    Data(#[from] crate::hsi_data::DataError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

/// Mean over sliding windows of `window` consecutive values of the
/// population variance inside each window.
pub fn rolling_variance(values: &[f64], window: usize) -> f64 {
    if window == 0 || values.len() < window {
        return f64::NAN;
    }
    let mut acc = 0.0;
    let n = values.len() - window + 1;
    for w in values.windows(window) {
        let m = w.iter().sum::<f64>() / window as f64;
        acc += w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / window as f64;
    }
    acc / n as f64
}
