//! Confusion counts, accuracy, F1 and rank-based AUC with SED as the
//! positive class.

use serde::{Deserialize, Serialize};

use crate::annotation::{ENGAGED, SED};
use crate::error::{Error, Result};

/// Probability above which a window is labeled SED. Ties go to engaged.
pub const THRESHOLD: f64 = 0.5;

pub fn predict_label(p_sed: f64) -> u8 {
    if p_sed > THRESHOLD {
        SED
    } else {
        ENGAGED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Self {
        Self::from_scores_at(scores, labels, labels.len(), |i| i)
    }

    /// Counts over the subset `idx` of positions.
    pub fn from_indices(scores: &[f64], labels: &[u8], idx: &[usize]) -> Self {
        Self::from_scores_at(scores, labels, idx.len(), |k| idx[k])
    }

    fn from_scores_at(scores: &[f64], labels: &[u8], n: usize, at: impl Fn(usize) -> usize) -> Self {
        let mut m = ConfusionMatrix::default();
        for k in 0..n {
            let i = at(k);
            m.record(predict_label(scores[i]), labels[i]);
        }
        m
    }

    pub fn record(&mut self, predicted: u8, actual: u8) {
        match (predicted == SED, actual == SED) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `2TP / (2TP + FP + FN)`; zero when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 0.0;
        }
        (2 * self.tp) as f64 / denom as f64
    }
}

impl std::ops::AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y == SED).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("AUC needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Twice the Mann-Whitney U statistic (ties count one half) with the
/// positive and negative counts. Integer-valued, so exact.
pub fn mann_whitney_u2(scores: &[f64], labels: &[u8]) -> Result<(u64, u64, u64)> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut u2 = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let gp = group.iter().filter(|&&k| labels[k] == SED).count() as u64;
        let gn = group.len() as u64 - gp;
        u2 += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    Ok((u2, pos, neg))
}

/// Probability that a random SED window scores above a random engaged one.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (u2, pos, neg) = mann_whitney_u2(scores, labels)?;
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

/// ROC points `(fpr, tpr)` from the highest threshold down, starting at (0, 0).
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == SED {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.8, 0.3, 0.5, 0.2], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.4; 6], &[1, 0, 1, 0, 0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn auc_rejects_single_class_and_nan() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass(_))));
        assert!(matches!(auc(&[f64::NAN, 0.2], &[1, 0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn confusion_ratios() {
        let m = ConfusionMatrix::from_scores(&[0.9, 0.2, 0.7, 0.5, 0.1], &[1, 1, 0, 0, 0]);
        assert_eq!(m, ConfusionMatrix { tp: 1, fp: 1, tn: 2, fn_: 1 });
        assert_eq!(m.accuracy(), 0.6);
        assert_eq!(m.f1(), 0.5);
    }

    #[test]
    fn roc_ends_at_one_one() {
        let pts = roc_points(&[0.9, 0.8, 0.8, 0.1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 1.0)]);
    }
}
