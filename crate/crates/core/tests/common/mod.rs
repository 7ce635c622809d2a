//! Independent reference implementations used by the oracle and acceptance
//! tests. Everything here is written with plain loops over `f64`.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use sedet_core::models::network::Layer;
use sedet_core::models::{Activation, Dense, GruCell, LstmCell, Network};
use sedet_core::synth::{GeneratorConfig, InteractionLength};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &Array2<f64>, b: &Array1<f64>, x: &[f64], col: usize) -> f64 {
    let mut acc = b[col];
    for (j, xj) in x.iter().enumerate() {
        acc += xj * w[[j, col]];
    }
    acc
}

/// One LSTM step, gate by gate. Columns are packed `[i, f, g, o]`.
pub fn naive_lstm(cell: &LstmCell<f64>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let zero = Array1::zeros(4 * hd);
    let mut h_new = vec![0.0; hd];
    let mut c_new = vec![0.0; hd];
    for k in 0..hd {
        let pre = |g: usize| affine(&cell.w_x, &cell.b, x, g * hd + k) + affine(&cell.w_h, &zero, h, g * hd + k);
        let i = sigmoid(pre(0));
        let f = sigmoid(pre(1));
        let g = pre(2).tanh();
        let o = sigmoid(pre(3));
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    (h_new, c_new)
}

/// One GRU step. Columns are packed `[z, r, candidate]`; the candidate sees
/// `r * h_prev`.
pub fn naive_gru(cell: &GruCell<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hd = h.len();
    let zero = Array1::zeros(3 * hd);
    let mut z = vec![0.0; hd];
    let mut r = vec![0.0; hd];
    for k in 0..hd {
        z[k] = sigmoid(affine(&cell.w_x, &cell.b, x, k) + affine(&cell.w_h, &zero, h, k));
        r[k] = sigmoid(affine(&cell.w_x, &cell.b, x, hd + k) + affine(&cell.w_h, &zero, h, hd + k));
    }
    let rh: Vec<f64> = (0..hd).map(|k| r[k] * h[k]).collect();
    (0..hd)
        .map(|k| {
            let n = (affine(&cell.w_x, &cell.b, x, 2 * hd + k) + affine(&cell.w_h, &zero, &rh, 2 * hd + k)).tanh();
            (1.0 - z[k]) * h[k] + z[k] * n
        })
        .collect()
}

fn naive_dense(d: &Dense<f64>, x: &[f64]) -> Vec<f64> {
    (0..d.w.ncols())
        .map(|k| {
            let v = affine(&d.w, &d.b, x, k);
            match d.activation {
                Activation::Identity => v,
                Activation::Relu => v.max(0.0),
            }
        })
        .collect()
}

fn naive_sequence(layer: &Layer<f64>, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match layer {
        Layer::Lstm(cell) => {
            let hd = cell.w_h.nrows();
            let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
            xs.iter()
                .map(|x| {
                    (h, c) = naive_lstm(cell, x, &h, &c);
                    h.clone()
                })
                .collect()
        }
        Layer::Gru(cell) => {
            let mut h = vec![0.0; cell.w_h.nrows()];
            xs.iter()
                .map(|x| {
                    h = naive_gru(cell, x, &h);
                    h.clone()
                })
                .collect()
        }
        Layer::Dense(_) => unreachable!(),
    }
}

/// Many-to-one forward pass returning `[P(engaged), P(SED)]`.
pub fn naive_network(net: &Network<f64>, window: &Array2<f64>) -> [f64; 2] {
    let logits = match (&net.layer1, &net.layer2) {
        (Layer::Dense(l1), Layer::Dense(l2)) => {
            let flat: Vec<f64> = window.iter().copied().collect();
            naive_dense(&net.readout, &naive_dense(l2, &naive_dense(l1, &flat)))
        }
        (l1, l2) => {
            let xs: Vec<Vec<f64>> = window.rows().into_iter().map(|r| r.to_vec()).collect();
            let hs = naive_sequence(l2, &naive_sequence(l1, &xs));
            naive_dense(&net.readout, hs.last().unwrap())
        }
    };
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Replaces every parameter, biases included, with uniform draws.
pub fn randomize<R: Rng>(net: &mut Network<f64>, rng: &mut R, scale: f64) {
    let mut fill = |a: &mut [f64]| a.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    for layer in [&mut net.layer1, &mut net.layer2] {
        match layer {
            Layer::Lstm(LstmCell { w_x, w_h, b }) | Layer::Gru(GruCell { w_x, w_h, b }) => {
                fill(w_x.as_slice_mut().unwrap());
                fill(w_h.as_slice_mut().unwrap());
                fill(b.as_slice_mut().unwrap());
            }
            Layer::Dense(d) => {
                fill(d.w.as_slice_mut().unwrap());
                fill(d.b.as_slice_mut().unwrap());
            }
        }
    }
    fill(net.readout.w.as_slice_mut().unwrap());
    fill(net.readout.b.as_slice_mut().unwrap());
}

/// Pairwise AUC: every (SED, engaged) pair, ties counting one half.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut twice = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &yi) in labels.iter().enumerate() {
        if yi == 1 {
            pos += 1;
        } else {
            neg += 1;
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj == 0 {
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2 * pos * neg) as f64
}

/// `(end_frame, label_frame)` of every window, by enumerating all
/// `(start, end)` frame pairs and keeping those `tau` apart.
pub fn brute_windows(n_frames: usize, tau_ms: u64, eta_ms: u64, frame_ms: u64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for start in 0..n_frames {
        for end in start..n_frames {
            let span_ms = (end - start) as u64 * frame_ms;
            if span_ms == tau_ms {
                let label_ms = end as u64 * frame_ms - eta_ms;
                out.push((end, (label_ms / frame_ms) as usize));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Interactions of one to two and a half minutes.
pub fn short_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        interaction: InteractionLength {
            mean_s: 90.0,
            sd_s: 20.0,
            min_s: 60.0,
            max_s: 150.0,
        },
        sed_segments_mean: 1.5,
        ..Default::default()
    }
}

/// The experiment corpus: two-minute interactions on average, with the
/// SED rate of the default generator.
pub fn experiment_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        interaction: InteractionLength {
            mean_s: 120.0,
            sd_s: 48.0,
            min_s: 60.0,
            max_s: 360.0,
        },
        sed_segments_mean: 120.0 / 70.0,
        ..Default::default()
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}
