//! Trained-model artifact: parameters plus everything inference needs to
//! reproduce the training-time feature pipeline.

use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::logreg::{LogRegFit, LogRegParams};
use super::network::Network;
use super::train::{predict_network, TrainMeta};
use super::{ModelKind, ParamBlocks};
use crate::error::{Error, Result};
use crate::layout::FeatureLayout;
use crate::preprocess::{ImputationModel, NormalizationModel};
use crate::scalar::Real;
use crate::stream::FrameSequence;
use crate::windowing::{WindowConfig, WindowSet};

pub const MODEL_SCHEMA: &str = "sedet.model/1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", bound = "T: Real")]
pub enum ModelParams<T> {
    #[serde(rename = "logreg")]
    LogReg(LogRegParams<T>),
    Network(Network<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum TrainRecord {
    Lbfgs {
        seed: u64,
        c: f64,
        class_weights: [f64; 2],
        train_windows: usize,
        fit: LogRegFit,
    },
    Rmsprop(TrainMeta),
}

impl TrainRecord {
    pub fn seed(&self) -> u64 {
        match self {
            TrainRecord::Lbfgs { seed, .. } => *seed,
            TrainRecord::Rmsprop(m) => m.seed,
        }
    }

    /// Epochs for networks, solver iterations for logistic regression.
    pub fn epochs_run(&self) -> usize {
        match self {
            TrainRecord::Lbfgs { fit, .. } => fit.iterations,
            TrainRecord::Rmsprop(m) => m.epochs_run,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainedModel<T> {
    pub schema: String,
    pub version: u32,
    pub kind: ModelKind,
    pub window_config: WindowConfig,
    pub layout_hash: String,
    pub imputation: ImputationModel<T>,
    pub normalization: NormalizationModel<T>,
    pub params: ModelParams<T>,
    pub train_meta: TrainRecord,
}

impl<T: Real> TrainedModel<T> {
    pub fn new(
        kind: ModelKind,
        window_config: WindowConfig,
        layout: &FeatureLayout,
        imputation: ImputationModel<T>,
        normalization: NormalizationModel<T>,
        params: ModelParams<T>,
        train_meta: TrainRecord,
    ) -> Result<Self> {
        let model = TrainedModel {
            schema: MODEL_SCHEMA.into(),
            version: MODEL_VERSION,
            kind,
            window_config,
            layout_hash: layout.hash(),
            imputation,
            normalization,
            params,
            train_meta,
        };
        model.validate()?;
        Ok(model)
    }

    /// Pooled feature dimension the model consumes.
    pub fn dim(&self) -> usize {
        self.normalization.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != MODEL_SCHEMA || self.version != MODEL_VERSION {
            return Err(Error::Format {
                location: "model".into(),
                detail: format!("unsupported schema {} version {}", self.schema, self.version),
            });
        }
        self.window_config.validate()?;
        let dim = self.dim();
        let rows = self.window_config.rows();
        if self.imputation.mean.len() != dim || self.normalization.sd.len() != dim {
            return Err(Error::Shape("imputation and normalization dimensions differ".into()));
        }
        match (&self.params, self.kind) {
            (ModelParams::LogReg(p), ModelKind::LogReg) => {
                if p.dim() != rows * dim {
                    return Err(Error::Shape(format!(
                        "logistic regression has {} weights, window has {}",
                        p.dim(),
                        rows * dim
                    )));
                }
            }
            (ModelParams::Network(n), kind) if n.config.kind == kind => {
                if n.config.frames != rows || n.config.input_dim != dim {
                    return Err(Error::Shape(format!(
                        "network expects {}x{} windows, configuration gives {rows}x{dim}",
                        n.config.frames, n.config.input_dim
                    )));
                }
            }
            _ => return Err(Error::Format {
                location: "model".into(),
                detail: format!("parameters do not match kind {}", self.kind),
            }),
        }
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        let params_finite = match &self.params {
            ModelParams::LogReg(p) => p.blocks().iter().all(|(_, b)| finite(b)),
            ModelParams::Network(n) => n.blocks().iter().all(|(_, b)| finite(b)),
        };
        if !params_finite
            || !finite(&self.imputation.mean)
            || !finite(&self.normalization.mean)
            || !finite(&self.normalization.sd)
        {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Rejects inference under a different feature layout than training.
    pub fn check_layout(&self, layout: &FeatureLayout) -> Result<()> {
        let got = layout.hash();
        if got != self.layout_hash {
            return Err(Error::Layout(format!(
                "model trained on layout {}, got {got}",
                self.layout_hash
            )));
        }
        Ok(())
    }

    /// Imputes and normalizes raw pooled frames.
    pub fn prepare(&self, raw: &FrameSequence<T>) -> Result<FrameSequence<T>> {
        self.normalization.apply(&self.imputation.apply(raw)?)
    }

    /// Imputes and normalizes one pooled row in place.
    pub fn prepare_row(&self, row: &mut [T], mask: &mut [bool]) {
        self.imputation.impute_row(row, mask);
        self.normalization.normalize_row(row);
    }

    /// SED probability for one prepared window.
    pub fn predict_window(&self, window: ArrayView2<T>) -> Result<T> {
        match &self.params {
            ModelParams::LogReg(p) => {
                if window.nrows() != self.window_config.rows() {
                    return Err(Error::Shape(format!(
                        "window has {} frames, model expects {}",
                        window.nrows(),
                        self.window_config.rows()
                    )));
                }
                p.predict(window)
            }
            ModelParams::Network(n) => Ok(n.forward_window(window)?[1]),
        }
    }

    /// SED probabilities for all windows of a prepared set.
    pub fn predict_set(&self, set: &WindowSet<T>) -> Result<Vec<T>> {
        if set.config != self.window_config {
            return Err(Error::Config(format!(
                "window set uses {:?}, model was trained with {:?}",
                set.config, self.window_config
            )));
        }
        match &self.params {
            ModelParams::LogReg(p) => (0..set.len()).map(|i| p.predict(set.window(i))).collect(),
            ModelParams::Network(n) => predict_network(n, set),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel<T> = serde_json::from_str(text).map_err(|e| Error::Format {
            location: "model".into(),
            detail: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                location: path.display().to_string(),
                detail,
            },
            other => other,
        })
    }
}
