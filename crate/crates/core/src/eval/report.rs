//! Fold aggregation and the sweep tables (CSV, and a grid with one row per
//! buffer and one column per observation window).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use super::resample::EvalReport;
use crate::annotation::Moments;
use crate::models::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub kind: ModelKind,
    pub tau_ms: u64,
    pub eta_ms: u64,
    pub folds: usize,
    pub accuracy: Moments,
    pub f1: Moments,
    pub auc: Moments,
    /// Resample confusion counts summed over folds.
    pub confusion: ConfusionMatrix,
}

impl SweepCell {
    pub fn from_folds(kind: ModelKind, tau_ms: u64, eta_ms: u64, reports: &[EvalReport]) -> Self {
        let pick = |f: fn(&EvalReport) -> f64| Moments::of(&reports.iter().map(f).collect::<Vec<_>>());
        let mut confusion = ConfusionMatrix::default();
        for r in reports {
            confusion += r.confusion;
        }
        SweepCell {
            kind,
            tau_ms,
            eta_ms,
            folds: reports.len(),
            accuracy: pick(|r| r.accuracy),
            f1: pick(|r| r.f1),
            auc: pick(|r| r.auc),
            confusion,
        }
    }
}

/// All `(tau, eta)` pairs in milliseconds with `tau >= eta`.
pub fn sweep_grid(taus_ms: &[u64], etas_ms: &[u64]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for &tau in taus_ms {
        for &eta in etas_ms {
            if tau >= eta {
                out.push((tau, eta));
            }
        }
    }
    out
}

fn secs(ms: u64) -> String {
    if ms.is_multiple_of(1000) {
        (ms / 1000).to_string()
    } else {
        format!("{}", ms as f64 / 1000.0)
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("model,tau_s,eta_s,folds,accuracy,accuracy_sd,f1,f1_sd,auc,auc_sd,tp,fp,tn,fn\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.kind,
            secs(c.tau_ms),
            secs(c.eta_ms),
            c.folds,
            c.accuracy.mean,
            c.accuracy.sd,
            c.f1.mean,
            c.f1.sd,
            c.auc.mean,
            c.auc.sd,
            c.confusion.tp,
            c.confusion.fp,
            c.confusion.tn,
            c.confusion.fn_
        ));
    }
    out
}

/// Grid of `accuracy(%) / F1 / AUC` for one model; cells with `tau < eta`
/// or not evaluated are left blank.
pub fn sweep_table(cells: &[SweepCell], kind: ModelKind) -> String {
    let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.kind == kind).collect();
    let taus: BTreeSet<u64> = mine.iter().map(|c| c.tau_ms).collect();
    let etas: BTreeSet<u64> = mine.iter().map(|c| c.eta_ms).collect();
    const W: usize = 20;
    let mut out = format!("{kind}: accuracy / F1 / AUC, rows eta (s), columns tau (s)\n");
    out.push_str(&format!("{:>6}", "eta"));
    for &t in &taus {
        out.push_str(&format!(" | {:^W$}", format!("tau={}", secs(t))));
    }
    out.push('\n');
    for &e in &etas {
        out.push_str(&format!("{:>6}", secs(e)));
        for &t in &taus {
            let text = mine
                .iter()
                .find(|c| c.tau_ms == t && c.eta_ms == e)
                .map(|c| format!("{:.2}/{:.3}/{:.3}", 100.0 * c.accuracy.mean, c.f1.mean, c.auc.mean))
                .unwrap_or_default();
            out.push_str(&format!(" | {text:^W$}"));
        }
        out.push('\n');
    }
    out
}

/// Confusion counts per model, in the layout of a two-class table with SED first.
pub fn confusion_csv(rows: &[(String, ConfusionMatrix)]) -> String {
    let mut out = String::from("model,actual,predicted_sed,predicted_engaged\n");
    for (name, m) in rows {
        out.push_str(&format!("{name},sed,{},{}\n", m.tp, m.fn_));
        out.push_str(&format!("{name},engaged,{},{}\n", m.fp, m.tn));
    }
    out
}
