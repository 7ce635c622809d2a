use serde::{Deserialize, Serialize};

use super::ParamBlocks;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-7,
            clip_norm: Some(5.0),
        }
    }
}

/// RMSprop with a running mean of squared gradients per parameter:
/// `v = rho * v + (1 - rho) * g^2`, `p -= lr * g / (sqrt(v) + eps)`.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    mean_sq: Vec<Vec<T>>,
}

/// L2 norm over all gradient blocks.
pub fn global_norm<T: Real, P: ParamBlocks<T>>(grads: &P) -> T {
    grads
        .blocks()
        .iter()
        .flat_map(|(_, b)| b.iter())
        .map(|&g| g * g)
        .sum::<T>()
        .sqrt()
}

impl<T: Real> RmsProp<T> {
    pub fn new<P: ParamBlocks<T>>(config: RmsPropConfig, params: &P) -> Self {
        let mean_sq = params.blocks().iter().map(|(_, b)| vec![T::zero(); b.len()]).collect();
        RmsProp { config, mean_sq }
    }

    /// Applies one update and returns the (pre-clip) gradient norm.
    pub fn step<P: ParamBlocks<T>>(&mut self, params: &mut P, grads: &P) -> T {
        let norm = global_norm(grads);
        let scale = match self.config.clip_norm {
            Some(c) if norm > T::c(c) => T::c(c) / norm,
            _ => T::one(),
        };
        let lr = T::c(self.config.learning_rate);
        let rho = T::c(self.config.rho);
        let eps = T::c(self.config.epsilon);
        let one = T::one();
        for ((p, (_, g)), v) in params
            .blocks_mut()
            .into_iter()
            .map(|(_, p)| p)
            .zip(grads.blocks())
            .zip(self.mean_sq.iter_mut())
        {
            for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let gi = gi * scale;
                *vi = rho * *vi + (one - rho) * gi * gi;
                *pi -= lr * gi / (vi.sqrt() + eps);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<f64>);

    impl ParamBlocks<f64> for Flat {
        fn blocks(&self) -> Vec<(String, &[f64])> {
            vec![("x".into(), &self.0)]
        }
        fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
            vec![("x".into(), &mut self.0)]
        }
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let mut p = Flat(vec![1.0, -2.0]);
        let g = Flat(vec![0.5, -0.1]);
        let cfg = RmsPropConfig {
            clip_norm: None,
            ..Default::default()
        };
        let mut opt = RmsProp::new(cfg, &p);
        opt.step(&mut p, &g);
        // v = 0.1 g^2, step = lr * g / (|g| sqrt(0.1) + eps)
        let expect0 = 1.0 - 1e-3 * 0.5 / ((0.1f64 * 0.25).sqrt() + 1e-7);
        let expect1 = -2.0 + 1e-3 * 0.1 / ((0.1f64 * 0.01).sqrt() + 1e-7);
        assert!((p.0[0] - expect0).abs() < 1e-15);
        assert!((p.0[1] - expect1).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Flat(vec![3.0, -4.0]);
        let cfg = RmsPropConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut opt = RmsProp::new(cfg, &p);
        for _ in 0..2000 {
            let g = Flat(p.0.iter().map(|x| 2.0 * x).collect());
            opt.step(&mut p, &g);
        }
        assert!(p.0.iter().all(|x| x.abs() < 0.05), "{:?}", p.0);
    }

    #[test]
    fn clipping_scales_large_gradients() {
        let mut p = Flat(vec![0.0]);
        let g = Flat(vec![100.0]);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        let norm = opt.step(&mut p, &g);
        assert_eq!(norm, 100.0);
        // Clipped gradient 5: v = 2.5, step = 1e-3 * 5 / (sqrt(2.5) + 1e-7).
        assert!((p.0[0] + 1e-3 * 5.0 / (2.5f64.sqrt() + 1e-7)).abs() < 1e-15);
    }
}
