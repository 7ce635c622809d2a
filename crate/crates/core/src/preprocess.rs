//! Mean imputation and z-score normalization fitted on training frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stream::FrameSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ImputationModel<T> {
    pub mean: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormalizationModel<T> {
    pub mean: Vec<T>,
    pub sd: Vec<T>,
}

fn check_dims<T: Real>(seqs: &[&FrameSequence<T>]) -> Result<usize> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Invalid("no training frames".into()))?;
    let dim = first.dim();
    if let Some(bad) = seqs.iter().find(|s| s.dim() != dim) {
        return Err(Error::Shape(format!(
            "interaction {} has {} columns, expected {dim}",
            bad.interaction_id,
            bad.dim()
        )));
    }
    Ok(dim)
}

impl<T: Real> ImputationModel<T> {
    /// Per-coordinate mean over observed training entries.
    ///
    /// `names` labels coordinates in the error raised when one was never observed.
    pub fn fit(seqs: &[&FrameSequence<T>], names: &[String]) -> Result<Self> {
        let dim = check_dims(seqs)?;
        let mut sum = vec![T::zero(); dim];
        let mut count = vec![0usize; dim];
        for seq in seqs {
            for (row, mask) in seq.frames.rows().into_iter().zip(seq.missing.rows()) {
                for j in 0..dim {
                    if !mask[j] && row[j].is_finite() {
                        sum[j] += row[j];
                        count[j] += 1;
                    }
                }
            }
        }
        let unobserved: Vec<String> = (0..dim)
            .filter(|&j| count[j] == 0)
            .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
            .collect();
        if !unobserved.is_empty() {
            return Err(Error::UnobservedCoordinates(unobserved));
        }
        let mean = sum
            .into_iter()
            .zip(count)
            .map(|(s, n)| s / T::from_usize(n).expect("count"))
            .collect();
        Ok(ImputationModel { mean })
    }

    pub fn impute_row(&self, row: &mut [T], mask: &mut [bool]) {
        for j in 0..row.len() {
            if mask[j] || !row[j].is_finite() {
                row[j] = self.mean[j];
                mask[j] = false;
            }
        }
    }

    pub fn apply(&self, seq: &FrameSequence<T>) -> Result<FrameSequence<T>> {
        if seq.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "imputer fitted on {} columns, frames have {}",
                self.mean.len(),
                seq.dim()
            )));
        }
        let mut out = seq.clone();
        for (mut row, mut mask) in out.frames.rows_mut().into_iter().zip(out.missing.rows_mut()) {
            self.impute_row(
                row.as_slice_mut().expect("row-major"),
                mask.as_slice_mut().expect("row-major"),
            );
        }
        Ok(out)
    }
}

impl<T: Real> NormalizationModel<T> {
    /// Per-coordinate mean and population standard deviation.
    ///
    /// Constant or numerically flat coordinates get `sd = 1` so they map to 0.
    pub fn fit(seqs: &[&FrameSequence<T>]) -> Result<Self> {
        let dim = check_dims(seqs)?;
        let n: usize = seqs.iter().map(|s| s.len()).sum();
        if n == 0 {
            return Err(Error::Invalid("no training frames".into()));
        }
        if seqs.iter().any(|s| s.frames.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(
                "normalizer requires imputed frames".into(),
            ));
        }
        let nf = T::from_usize(n).expect("count");
        let mut mean = vec![T::zero(); dim];
        let mut sd = vec![T::one(); dim];
        for j in 0..dim {
            let col = || seqs.iter().flat_map(|s| s.frames.column(j).to_vec());
            let first = col().next().expect("non-empty");
            let (lo, hi) = col().fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if lo == hi {
                mean[j] = first;
                continue;
            }
            let mu = col().sum::<T>() / nf;
            let var = col().map(|x| (x - mu) * (x - mu)).sum::<T>() / nf;
            let s = var.sqrt();
            mean[j] = mu;
            let flat = T::epsilon().sqrt() * mu.abs().max(T::one());
            if s > flat {
                sd[j] = s;
            }
        }
        Ok(NormalizationModel { mean, sd })
    }

    pub fn normalize_row(&self, row: &mut [T]) {
        for j in 0..row.len() {
            row[j] = (row[j] - self.mean[j]) / self.sd[j];
        }
    }

    pub fn apply(&self, seq: &FrameSequence<T>) -> Result<FrameSequence<T>> {
        if seq.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} columns, frames have {}",
                self.mean.len(),
                seq.dim()
            )));
        }
        let mut out = seq.clone();
        for mut row in out.frames.rows_mut() {
            self.normalize_row(row.as_slice_mut().expect("row-major"));
        }
        Ok(out)
    }

    pub fn invert(&self, seq: &FrameSequence<T>) -> FrameSequence<T> {
        let mut out = seq.clone();
        for mut row in out.frames.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = *x * self.sd[j] + self.mean[j];
            }
        }
        out
    }
}
