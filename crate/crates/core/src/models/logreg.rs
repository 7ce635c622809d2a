//! Class-weighted, L2-regularized logistic regression on flattened windows,
//! fitted with L-BFGS.
//!
//! Objective: `0.5 * |w|^2 + C * sum_i s_i * logloss_i`, intercept unpenalized.

use std::collections::VecDeque;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::ParamBlocks;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LogRegParams<T> {
    pub w: Vec<T>,
    pub b: T,
    /// Inverse regularization strength.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegFit {
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            memory: 10,
        }
    }
}

fn dot_window<T: Real>(w: &[T], x: &ArrayView2<T>) -> T {
    match x.as_slice() {
        Some(xs) => w.iter().zip(xs).map(|(&a, &b)| a * b).sum(),
        None => w.iter().zip(x.iter()).map(|(&a, &b)| a * b).sum(),
    }
}

fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

impl<T: Real> LogRegParams<T> {
    pub fn zeros(dim: usize, c: f64) -> Self {
        LogRegParams {
            w: vec![T::zero(); dim],
            b: T::zero(),
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Probability of the positive (SED) class, `sigmoid(w . x + b)`.
    pub fn predict(&self, window: ArrayView2<T>) -> Result<T> {
        if window.len() != self.w.len() {
            return Err(Error::Shape(format!(
                "window has {} features, model expects {}",
                window.len(),
                self.w.len()
            )));
        }
        Ok((dot_window(&self.w, &window) + self.b).sigmoid())
    }

    /// Objective value and gradient `(d/dw, d/db)`.
    pub fn objective(&self, windows: &[ArrayView2<T>], labels: &[u8], weights: [T; 2]) -> (T, Vec<T>, T) {
        let c = T::c(self.c);
        let mut f = self.w.iter().map(|&x| x * x).sum::<T>() * T::half();
        let mut gw: Vec<T> = self.w.clone();
        let mut gb = T::zero();
        for (x, &y) in windows.iter().zip(labels) {
            let z = dot_window(&self.w, x) + self.b;
            let s = weights[y as usize];
            let yt = if y == 1 { T::one() } else { T::zero() };
            f += c * s * (softplus(z) - yt * z);
            let coef = c * s * (z.sigmoid() - yt);
            gb += coef;
            match x.as_slice() {
                Some(xs) => gw.iter_mut().zip(xs).for_each(|(g, &v)| *g += coef * v),
                None => gw.iter_mut().zip(x.iter()).for_each(|(g, &v)| *g += coef * v),
            }
        }
        (f, gw, gb)
    }
}

impl<T: Real> ParamBlocks<T> for LogRegParams<T> {
    fn blocks(&self) -> Vec<(String, &[T])> {
        vec![("w".into(), &self.w), ("b".into(), std::slice::from_ref(&self.b))]
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [T])> {
        vec![("w".into(), &mut self.w), ("b".into(), std::slice::from_mut(&mut self.b))]
    }
}

fn check_inputs<T: Real>(windows: &[ArrayView2<T>], labels: &[u8]) -> Result<usize> {
    if windows.len() != labels.len() {
        return Err(Error::Shape(format!("{} windows, {} labels", windows.len(), labels.len())));
    }
    let dim = windows.first().map(|w| w.len()).ok_or_else(|| Error::Invalid("no training windows".into()))?;
    for w in windows {
        if w.len() != dim {
            return Err(Error::Shape("windows differ in size".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logistic regression features".into()));
        }
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::SingleClass("logistic regression needs both classes".into()));
    }
    Ok(dim)
}

fn pack<T: Real>(p: &LogRegParams<T>) -> Vec<T> {
    let mut v = p.w.clone();
    v.push(p.b);
    v
}

fn unpack<T: Real>(v: &[T], c: f64) -> LogRegParams<T> {
    LogRegParams {
        w: v[..v.len() - 1].to_vec(),
        b: v[v.len() - 1],
        c,
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Fits from zero initialization. Deterministic for fixed inputs.
pub fn train<T: Real>(
    windows: &[ArrayView2<T>],
    labels: &[u8],
    weights: [T; 2],
    c: f64,
    opts: SolverOptions,
) -> Result<(LogRegParams<T>, LogRegFit)> {
    let dim = check_inputs(windows, labels)?;
    if !(c > 0.0) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    let eval = |v: &[T]| {
        let (f, mut g, gb) = unpack(v, c).objective(windows, labels, weights);
        g.push(gb);
        (f, g)
    };
    let mut x = pack(&LogRegParams::<T>::zeros(dim, c));
    let (mut f, mut g) = eval(&x);
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    let mut iterations = 0;
    let norm = |g: &[T]| dot(g, g).sqrt();
    while iterations < opts.max_iter && norm(&g).f64() >= opts.grad_tol {
        iterations += 1;
        // Two-loop recursion for the search direction.
        let mut q: Vec<T> = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, &yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => T::one() / norm(&g).max(T::one()),
        };
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = *rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, &si)| *qi += (a - beta) * si);
        }
        let mut dir: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= T::zero() {
            history.clear();
            dir = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &dir);
        }
        // Backtracking Armijo search.
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..50 {
            let cand: Vec<T> = x.iter().zip(&dir).map(|(&xi, &di)| xi + step * di).collect();
            let (fc, gc) = eval(&cand);
            if fc.is_finite() && fc <= f + T::c(1e-4) * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= T::half();
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, T::one() / sy));
        }
        let stalled = (f - fnew).abs() <= T::epsilon() * f.abs();
        x = xn;
        f = fnew;
        g = gn;
        if stalled {
            break;
        }
    }
    let gn = norm(&g).f64();
    Ok((
        unpack(&x, c),
        LogRegFit {
            iterations,
            grad_norm: gn,
            objective: f.f64(),
            converged: gn < opts.grad_tol,
        },
    ))
}
