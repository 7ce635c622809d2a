//! Accuracy and F1 on class-balanced subsets of a test fold.
//!
//! All SED (minority) windows are paired with each of `floor(N_maj / N_min)`
//! disjoint, equally sized subsets of a seeded shuffle of the engaged windows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, ConfusionMatrix};
use crate::annotation::{ENGAGED, SED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub minority: Vec<usize>,
    pub subsets: Vec<Vec<usize>>,
    /// Set when the engaged class is smaller than the SED class and a single
    /// unbalanced resample is used instead.
    pub flagged: bool,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Positions of resample `i`: all minority windows, then the subset.
    pub fn resample(&self, i: usize) -> Vec<usize> {
        let mut v = self.minority.clone();
        v.extend_from_slice(&self.subsets[i]);
        v
    }
}

pub fn balanced_partition(labels: &[u8], seed: u64) -> Result<Partition> {
    let minority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == SED).collect();
    let mut majority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == ENGAGED).collect();
    if minority.is_empty() || majority.is_empty() {
        return Err(Error::SingleClass("test fold needs both classes".into()));
    }
    if majority.len() < minority.len() {
        return Ok(Partition {
            minority,
            subsets: vec![majority],
            flagged: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    majority.shuffle(&mut rng);
    let k = majority.len() / minority.len();
    let subsets = majority
        .chunks_exact(minority.len())
        .take(k)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(Partition {
        minority,
        subsets,
        flagged: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over resamples.
    pub accuracy: f64,
    /// Mean over resamples.
    pub f1: f64,
    /// On the full, unresampled fold.
    pub auc: f64,
    /// Summed over resamples.
    pub confusion: ConfusionMatrix,
    /// On the full, unresampled fold.
    pub full_confusion: ConfusionMatrix,
    pub resample_accuracy: Vec<f64>,
    pub resample_f1: Vec<f64>,
    pub n_windows: usize,
    pub n_sed: usize,
    pub flagged: bool,
}

/// Scores every balanced resample of a fold plus the full-fold AUC.
pub fn balanced_resample_eval(scores: &[f64], labels: &[u8], seed: u64) -> Result<EvalReport> {
    let auc = auc(scores, labels)?;
    let part = balanced_partition(labels, seed)?;
    let mut confusion = ConfusionMatrix::default();
    let mut resample_accuracy = Vec::with_capacity(part.len());
    let mut resample_f1 = Vec::with_capacity(part.len());
    for i in 0..part.len() {
        let m = ConfusionMatrix::from_indices(scores, labels, &part.resample(i));
        resample_accuracy.push(m.accuracy());
        resample_f1.push(m.f1());
        confusion += m;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(EvalReport {
        accuracy: mean(&resample_accuracy),
        f1: mean(&resample_f1),
        auc,
        confusion,
        full_confusion: ConfusionMatrix::from_scores(scores, labels),
        resample_accuracy,
        resample_f1,
        n_windows: labels.len(),
        n_sed: part.minority.len(),
        flagged: part.flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n_sed: usize, n_eng: usize) -> Vec<u8> {
        let mut v = vec![SED; n_sed];
        v.extend(vec![ENGAGED; n_eng]);
        v
    }

    #[test]
    fn ten_and_ninety_five_give_nine_resamples() {
        let p = balanced_partition(&labels(10, 95), 3).unwrap();
        assert_eq!(p.len(), 9);
        assert!(p.subsets.iter().all(|s| s.len() == 10));
        assert_eq!(p.resample(0).len(), 20);
    }

    #[test]
    fn perfect_and_constant_models() {
        let y = labels(10, 95);
        let perfect: Vec<f64> = y.iter().map(|&l| l as f64).collect();
        let r = balanced_resample_eval(&perfect, &y, 1).unwrap();
        assert!(r.resample_accuracy.iter().all(|&a| a == 1.0));
        assert!(r.resample_f1.iter().all(|&f| f == 1.0));
        let constant = vec![0.5; y.len()];
        let r = balanced_resample_eval(&constant, &y, 1).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn more_sed_than_engaged_is_flagged() {
        let p = balanced_partition(&labels(5, 3), 0).unwrap();
        assert!(p.flagged);
        assert_eq!(p.len(), 1);
        assert_eq!(p.subsets[0].len(), 3);
    }
}
