//! Mini-batch RMSprop training with dropout and early stopping on
//! validation accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkConfig};
use super::optim::{RmsProp, RmsPropConfig};
use super::ModelKind;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::windowing::WindowSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: RmsPropConfig,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub hidden: [usize; 2],
    /// Inverse regularization strength for logistic regression.
    pub logreg_c: f64,
    pub logreg_max_iter: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: RmsPropConfig::default(),
            max_epochs: 100,
            validation_fraction: 0.10,
            patience: 5,
            dropout: 0.1,
            batch_size: 32,
            hidden: [32, 2],
            logreg_c: 1.0,
            logreg_max_iter: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience, batch size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub kind: ModelKind,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub class_weights: [f64; 2],
    pub train_windows: usize,
    pub val_windows: usize,
    pub history: Vec<EpochRecord>,
    pub config: TrainConfig,
}

/// SED probability for every window of a set, dropout off.
pub fn predict_network<T: Real>(net: &Network<T>, set: &WindowSet<T>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(256) {
        let views: Vec<_> = chunk.iter().map(|&i| set.window(i)).collect();
        let p = net.predict_batch(&views)?;
        out.extend(p.column(1).iter().copied());
    }
    Ok(out)
}

/// Accuracy where each window counts with its class weight.
pub fn weighted_accuracy<T: Real>(p_sed: &[T], labels: &[u8], weights: [f64; 2]) -> f64 {
    let mut hit = 0.0;
    let mut total = 0.0;
    for (&p, &y) in p_sed.iter().zip(labels) {
        let w = weights[y as usize];
        let pred = u8::from(p > T::half());
        total += w;
        if pred == y {
            hit += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        hit / total
    }
}

/// Trains a network and returns the parameters of the best validation epoch.
pub fn train_network<T: Real>(
    kind: ModelKind,
    train: &WindowSet<T>,
    val: &WindowSet<T>,
    weights: [f64; 2],
    cfg: &TrainConfig,
) -> Result<(Network<T>, TrainMeta)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid(format!(
            "empty split: {} training, {} validation windows",
            train.len(),
            val.len()
        )));
    }
    let train_labels = train.labels();
    if !train_labels.contains(&0) || !train_labels.contains(&1) {
        return Err(Error::SingleClass("network training split".into()));
    }
    let val_labels = val.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net_cfg = NetworkConfig {
        kind,
        input_dim: train.dim(),
        frames: train.rows(),
        hidden: cfg.hidden,
        dropout: cfg.dropout,
    };
    let mut net = Network::<T>::new(net_cfg, &mut rng)?;
    let mut opt = RmsProp::new(cfg.optimizer, &net);
    let w = [T::c(weights[0]), T::c(weights[1])];

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = net.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let views: Vec<_> = chunk.iter().map(|&i| train.window(i)).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train.items[i].label).collect();
            let (loss, grad) = net.loss_and_grad(&views, &labels, w, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: loss.f64(),
                });
            }
            loss_sum += loss.f64() * chunk.len() as f64;
            opt.step(&mut net, &grad);
        }
        let val_acc = weighted_accuracy(&predict_network(&net, val)?, &val_labels, weights);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_accuracy: val_acc,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best = net.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let meta = TrainMeta {
        kind,
        seed: cfg.seed,
        epochs_run: history.len(),
        best_epoch,
        best_val_accuracy: best_acc,
        class_weights: weights,
        train_windows: train.len(),
        val_windows: val.len(),
        history,
        config: cfg.clone(),
    };
    Ok((best, meta))
}
