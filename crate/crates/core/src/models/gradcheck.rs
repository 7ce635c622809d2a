//! Central finite-difference checks of the analytic gradients on toy models.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logreg::LogRegParams;
use super::network::{Network, NetworkConfig};
use super::{ModelKind, ParamBlocks};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor so that entries with near-zero gradient do not turn
/// rounding noise into large relative errors.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub input_dim: usize,
    pub frames: usize,
    pub hidden: [usize; 2],
    pub batch: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            input_dim: 3,
            frames: 3,
            hidden: [2, 2],
            batch: 4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub name: String,
    pub params: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: ModelKind,
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_err < self.tolerance)
    }

    pub fn failing_blocks(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| !(b.max_rel_err < self.tolerance))
            .map(|b| b.name.as_str())
            .collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn compare<P, F>(params: &P, grads: &P, loss: F, corrupt: Option<(&str, f64)>) -> Vec<BlockCheck>
where
    P: ParamBlocks<f64> + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = params.clone();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .blocks()
        .into_iter()
        .map(|(name, g)| {
            let factor = match corrupt {
                Some((block, f)) if block == name => f,
                _ => 1.0,
            };
            let g = g.iter().map(|x| x * factor).collect();
            (name, g)
        })
        .collect();
    let mut out = Vec::with_capacity(analytic.len());
    for (bi, (name, g)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (k, &a) in g.iter().enumerate() {
            let orig = probe.blocks()[bi].1[k];
            probe.blocks_mut()[bi].1[k] = orig + FD_STEP;
            let up = loss(&probe);
            probe.blocks_mut()[bi].1[k] = orig - FD_STEP;
            let down = loss(&probe);
            probe.blocks_mut()[bi].1[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(a, numeric));
        }
        out.push(BlockCheck {
            name: name.clone(),
            params: g.len(),
            max_rel_err: worst,
        });
    }
    out
}

fn toy_data(toy: &ToyConfig, rng: &mut ChaCha8Rng) -> (Vec<Array2<f64>>, Vec<u8>) {
    let windows = (0..toy.batch)
        .map(|_| Array2::from_shape_simple_fn((toy.frames, toy.input_dim), || rng.random_range(-1.0..1.0)))
        .collect();
    // Both classes always present.
    let labels = (0..toy.batch).map(|i| (i % 2) as u8).collect();
    (windows, labels)
}

/// Checks every parameter block of a toy model of the given kind.
pub fn gradient_check(kind: ModelKind, toy: &ToyConfig, tolerance: f64) -> Result<GradCheckReport> {
    gradient_check_corrupted(kind, toy, tolerance, None)
}

/// Like [`gradient_check`], with the analytic gradient of one named block
/// multiplied by a factor before comparison.
pub fn gradient_check_corrupted(
    kind: ModelKind,
    toy: &ToyConfig,
    tolerance: f64,
    corrupt: Option<(&str, f64)>,
) -> Result<GradCheckReport> {
    if toy.batch < 2 || toy.frames == 0 || toy.input_dim == 0 {
        return Err(Error::Config(format!("toy configuration too small: {toy:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(toy.seed);
    let (windows, labels) = toy_data(toy, &mut rng);
    let views: Vec<ArrayView2<f64>> = windows.iter().map(|w| w.view()).collect();
    let weights = [0.7, 1.6];
    let blocks = match kind {
        ModelKind::LogReg => {
            let dim = toy.frames * toy.input_dim;
            let params = LogRegParams {
                w: (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
                b: rng.random_range(-0.5..0.5),
                c: 1.0,
            };
            let (_, gw, gb) = params.objective(&views, &labels, weights);
            let grads = LogRegParams { w: gw, b: gb, c: 1.0 };
            compare(&params, &grads, |p| p.objective(&views, &labels, weights).0, corrupt)
        }
        _ => {
            let cfg = NetworkConfig {
                kind,
                input_dim: toy.input_dim,
                frames: toy.frames,
                hidden: toy.hidden,
                dropout: 0.0,
            };
            let mut net = Network::<f64>::new(cfg, &mut rng)?;
            // Zero biases can put ReLU pre-activations exactly on the kink.
            for (name, block) in net.blocks_mut() {
                if name.ends_with(".b") {
                    block.iter_mut().for_each(|b| *b += rng.random_range(-0.3..0.3));
                }
            }
            let (_, grads) = net.loss_and_grad::<ChaCha8Rng>(&views, &labels, weights, None)?;
            compare(
                &net,
                &grads,
                |n| n.loss(&views, &labels, weights).expect("toy shapes are consistent"),
                corrupt,
            )
        }
    };
    if let Some((name, _)) = corrupt {
        if !blocks.iter().any(|b| b.name == name) {
            return Err(Error::Config(format!("no parameter block named `{name}`")));
        }
    }
    Ok(GradCheckReport {
        kind,
        tolerance,
        blocks,
    })
}
