//! Per-feature engaged vs SED comparison with Welch's t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::annotation::{FrameLabels, ENGAGED, SED};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stream::FrameSequence;

/// Significance buckets: `****` p < 1e-4, `***` < 1e-3, `**` < 1e-2, `*` < 0.05.
pub fn stars(p: f64) -> &'static str {
    if p < 1e-4 {
        "****"
    } else if p < 1e-3 {
        "***"
    } else if p < 1e-2 {
        "**"
    } else if p < 5e-2 {
        "*"
    } else {
        "-"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided Welch test of `mean(a) - mean(b)`. `None` when a sample has
/// fewer than two values or both sample variances vanish.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Some(WelchTest { t, df, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContrast {
    pub feature: String,
    pub n_engaged: usize,
    pub n_sed: usize,
    pub mean_engaged: f64,
    pub mean_sed: f64,
    /// Test of engaged minus SED; absent when undefined.
    pub test: Option<WelchTest>,
    pub stars: String,
}

/// Compares observed values of every pooled coordinate between frames both
/// annotators label engaged and frames both label SED.
pub fn behavior_contrast<T: Real>(
    frames: &[&FrameSequence<T>],
    labels: &[&FrameLabels],
    names: &[String],
) -> Result<Vec<FeatureContrast>> {
    if frames.len() != labels.len() {
        return Err(Error::Invalid(format!("{} frame sequences, {} label sets", frames.len(), labels.len())));
    }
    let dim = names.len();
    let mut eng: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut sed: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut states = [false; 2];
    for (seq, lab) in frames.iter().zip(labels) {
        if seq.dim() != dim {
            return Err(Error::Shape(format!("{} columns, {} names", seq.dim(), dim)));
        }
        for t in 0..seq.len().min(lab.len()) {
            let Some(y) = lab.consensus(t) else { continue };
            states[y as usize] = true;
            let bucket = if y == SED { &mut sed } else { &mut eng };
            for j in 0..dim {
                let v = seq.frames[[t, j]];
                if !seq.missing[[t, j]] && v.is_finite() {
                    bucket[j].push(v.f64());
                }
            }
        }
    }
    if !states[ENGAGED as usize] || !states[SED as usize] {
        return Err(Error::SingleClass("contrast needs agreed frames of both states".into()));
    }
    let mean = |x: &[f64]| if x.is_empty() { f64::NAN } else { x.iter().sum::<f64>() / x.len() as f64 };
    Ok((0..dim)
        .map(|j| {
            let test = welch_t(&eng[j], &sed[j]);
            FeatureContrast {
                feature: names[j].clone(),
                n_engaged: eng[j].len(),
                n_sed: sed[j].len(),
                mean_engaged: mean(&eng[j]),
                mean_sed: mean(&sed[j]),
                stars: test.map_or("-", |t| stars(t.p)).to_string(),
                test,
            }
        })
        .collect())
}

/// CSV with one row per coordinate; undefined tests are written as `NA`.
pub fn contrast_csv(rows: &[FeatureContrast]) -> String {
    let mut out = String::from("# test=welch_two_sided\nfeature,n_engaged,n_sed,mean_engaged,mean_sed,t,df,p,stars\n");
    for r in rows {
        let (t, df, p) = match r.test {
            Some(w) => (w.t.to_string(), w.df.to_string(), w.p.to_string()),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{t},{df},{p},{}\n",
            r.feature, r.n_engaged, r.n_sed, r.mean_engaged, r.mean_sed, r.stars
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(5e-5), "****");
        assert_eq!(stars(1e-4), "***");
        assert_eq!(stars(5e-3), "**");
        assert_eq!(stars(0.049), "*");
        assert_eq!(stars(0.05), "-");
    }

    #[test]
    fn identical_samples_give_zero_t() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let w = welch_t(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.p, 1.0);
        assert_eq!(stars(w.p), "-");
    }

    #[test]
    fn matches_hand_computation() {
        // a: mean 2, var 1, n 3; b: mean 5, var 4, n 3 -> se^2 = 5/3, df = (5/3)^2 / ((1/9 + 16/9) / 2)
        let w = welch_t(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((w.t + 3.0 / (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((w.df - (25.0 / 9.0) / (17.0 / 18.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_are_undefined() {
        assert!(welch_t(&[1.0, 1.0], &[1.0, 1.0, 1.0]).is_none());
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_none());
    }
}
