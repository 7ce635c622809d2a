//! Two-layer many-to-one networks with a softmax readout.
//!
//! Recurrent kinds unroll layer 1 over the window's frames and feed its
//! hidden sequence to layer 2; the last layer-2 state goes through an affine
//! readout. The feedforward kind flattens the window into one vector.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cells::{Activation, Dense, GruCell, GruStep, LstmCell, LstmStep};
use super::{ModelKind, ParamBlocks};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub frames: usize,
    pub hidden: [usize; 2],
    pub dropout: f64,
}

impl NetworkConfig {
    pub fn new(kind: ModelKind, input_dim: usize, frames: usize) -> Self {
        NetworkConfig {
            kind,
            input_dim,
            frames,
            hidden: [32, 2],
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "T: Real")]
pub enum Layer<T> {
    Lstm(LstmCell<T>),
    Gru(GruCell<T>),
    Dense(Dense<T>),
}

impl<T: Real> Layer<T> {
    fn zeros_like(&self) -> Self {
        match self {
            Layer::Lstm(c) => Layer::Lstm(LstmCell::zeros(c.input_dim(), c.hidden())),
            Layer::Gru(c) => Layer::Gru(GruCell::zeros(c.input_dim(), c.hidden())),
            Layer::Dense(d) => Layer::Dense(Dense::zeros(d.w.nrows(), d.w.ncols(), d.activation)),
        }
    }

    fn blocks<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [T])>) {
        let mut push = |name: &str, a: &'a [T]| out.push((format!("{prefix}.{name}"), a));
        match self {
            Layer::Lstm(LstmCell { w_x, w_h, b }) | Layer::Gru(GruCell { w_x, w_h, b }) => {
                push("w_x", w_x.as_slice().expect("standard layout"));
                push("w_h", w_h.as_slice().expect("standard layout"));
                push("b", b.as_slice().expect("standard layout"));
            }
            Layer::Dense(d) => {
                push("w", d.w.as_slice().expect("standard layout"));
                push("b", d.b.as_slice().expect("standard layout"));
            }
        }
    }

    fn blocks_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [T])>) {
        let mut push = |name: &str, a: &'a mut [T]| out.push((format!("{prefix}.{name}"), a));
        match self {
            Layer::Lstm(LstmCell { w_x, w_h, b }) | Layer::Gru(GruCell { w_x, w_h, b }) => {
                push("w_x", w_x.as_slice_mut().expect("standard layout"));
                push("w_h", w_h.as_slice_mut().expect("standard layout"));
                push("b", b.as_slice_mut().expect("standard layout"));
            }
            Layer::Dense(d) => {
                push("w", d.w.as_slice_mut().expect("standard layout"));
                push("b", d.b.as_slice_mut().expect("standard layout"));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub layer1: Layer<T>,
    pub layer2: Layer<T>,
    pub readout: Dense<T>,
}

enum SeqCache<T> {
    Lstm(Vec<LstmStep<T>>),
    Gru(Vec<GruStep<T>>),
}

enum Cache<T> {
    Recurrent {
        l1: SeqCache<T>,
        mid_masks: Option<Vec<Array2<T>>>,
        l2: SeqCache<T>,
        last: Array2<T>,
    },
    Feedforward {
        x: Array2<T>,
        pre1: Array2<T>,
        a1: Array2<T>,
        mid_mask: Option<Array2<T>>,
        pre2: Array2<T>,
        a2: Array2<T>,
    },
}

fn dropout_mask<T: Real, R: Rng>(rng: &mut R, shape: (usize, usize), rate: f64) -> Array2<T> {
    let keep = T::one() / T::c(1.0 - rate);
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    })
}

fn seq_forward<T: Real>(layer: &Layer<T>, xs: &[Array2<T>]) -> Result<(Vec<Array2<T>>, SeqCache<T>)> {
    match layer {
        Layer::Lstm(cell) => {
            let steps = cell.sequence(xs)?;
            let hs = steps.iter().map(|s| s.h.clone()).collect();
            Ok((hs, SeqCache::Lstm(steps)))
        }
        Layer::Gru(cell) => {
            let steps = cell.sequence(xs)?;
            let hs = steps.iter().map(|s| s.h.clone()).collect();
            Ok((hs, SeqCache::Gru(steps)))
        }
        Layer::Dense(_) => Err(Error::Shape("dense layer in a recurrent stack".into())),
    }
}

fn seq_backward<T: Real>(layer: &Layer<T>, cache: &SeqCache<T>, dhs: &[Array2<T>], grad: &mut Layer<T>) -> Vec<Array2<T>> {
    match (layer, cache, grad) {
        (Layer::Lstm(cell), SeqCache::Lstm(steps), Layer::Lstm(g)) => cell.backward(steps, dhs, g),
        (Layer::Gru(cell), SeqCache::Gru(steps), Layer::Gru(g)) => cell.backward(steps, dhs, g),
        _ => unreachable!("cache built by the same layer"),
    }
}

/// Row-wise softmax.
pub fn softmax<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

/// Class-weighted mean cross-entropy and its gradient with respect to the logits.
pub fn weighted_cross_entropy<T: Real>(logits: &Array2<T>, labels: &[u8], weights: [T; 2]) -> (T, Array2<T>) {
    let bsz = T::from_usize(labels.len()).expect("batch size");
    let p = softmax(logits);
    let mut loss = T::zero();
    let mut d = p.clone();
    for (b, &y) in labels.iter().enumerate() {
        let y = y as usize;
        let row = logits.row(b);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&l| (l - m).exp()).sum::<T>().ln();
        let w = weights[y];
        loss += w * (lse - row[y]);
        d[[b, y]] -= T::one();
        let scale = w / bsz;
        d.row_mut(b).mapv_inplace(|g| g * scale);
    }
    (loss / bsz, d)
}

impl<T: Real> Network<T> {
    pub fn new<R: Rng>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let [h1, h2] = config.hidden;
        if h1 == 0 || h2 == 0 || config.input_dim == 0 || config.frames == 0 {
            return Err(Error::Config(format!("degenerate network shape {config:?}")));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", config.dropout)));
        }
        let (layer1, layer2) = match config.kind {
            ModelKind::Lstm => (
                Layer::Lstm(LstmCell::init(config.input_dim, h1, rng)),
                Layer::Lstm(LstmCell::init(h1, h2, rng)),
            ),
            ModelKind::Gru => (
                Layer::Gru(GruCell::init(config.input_dim, h1, rng)),
                Layer::Gru(GruCell::init(h1, h2, rng)),
            ),
            ModelKind::Dnn => (
                Layer::Dense(Dense::init(config.input_dim * config.frames, h1, Activation::Relu, rng)),
                Layer::Dense(Dense::init(h1, h2, Activation::Relu, rng)),
            ),
            ModelKind::LogReg => {
                return Err(Error::Config("logistic regression is not a network kind".into()))
            }
        };
        let readout = Dense::init(h2, 2, Activation::Identity, rng);
        Ok(Network {
            config,
            layer1,
            layer2,
            readout,
        })
    }

    /// Same shapes, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Network {
            config: self.config,
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
            readout: Dense::zeros(self.readout.w.nrows(), 2, Activation::Identity),
        }
    }

    fn check_windows(&self, windows: &[ArrayView2<T>]) -> Result<()> {
        if windows.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for w in windows {
            if w.dim() != (self.config.frames, self.config.input_dim) {
                return Err(Error::Shape(format!(
                    "window is {:?}, network expects ({}, {})",
                    w.dim(),
                    self.config.frames,
                    self.config.input_dim
                )));
            }
        }
        Ok(())
    }

    fn forward_cached<R: Rng>(&self, windows: &[ArrayView2<T>], mut rng: Option<&mut R>) -> Result<(Array2<T>, Cache<T>)> {
        self.check_windows(windows)?;
        let bsz = windows.len();
        let n = self.config.frames;
        let d = self.config.input_dim;
        let rate = self.config.dropout;
        let mut mask = |shape: (usize, usize)| -> Option<Array2<T>> {
            match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => Some(dropout_mask(r, shape, rate)),
                _ => None,
            }
        };
        let mut masks = |count: usize, shape: (usize, usize)| -> Option<Vec<Array2<T>>> {
            (0..count).map(|_| mask(shape)).collect()
        };
        match (&self.layer1, &self.layer2) {
            (Layer::Dense(l1), Layer::Dense(l2)) => {
                let mut x = Array2::zeros((bsz, n * d));
                for (b, w) in windows.iter().enumerate() {
                    for (k, v) in w.iter().enumerate() {
                        x[[b, k]] = *v;
                    }
                }
                if let Some(m) = mask((bsz, n * d)) {
                    x *= &m;
                }
                let (pre1, mut a1) = l1.forward(x.view())?;
                let mid_mask = mask(a1.dim());
                if let Some(m) = &mid_mask {
                    a1 *= m;
                }
                let (pre2, a2) = l2.forward(a1.view())?;
                let (_, logits) = self.readout.forward(a2.view())?;
                Ok((
                    logits,
                    Cache::Feedforward {
                        x,
                        pre1,
                        a1,
                        mid_mask,
                        pre2,
                        a2,
                    },
                ))
            }
            (l1, l2) => {
                let mut xs: Vec<Array2<T>> = (0..n)
                    .map(|t| Array2::from_shape_fn((bsz, d), |(b, j)| windows[b][[t, j]]))
                    .collect();
                if let Some(ms) = &masks(n, (bsz, d)) {
                    for (x, m) in xs.iter_mut().zip(ms) {
                        *x *= m;
                    }
                }
                let (mut hs1, c1) = seq_forward(l1, &xs)?;
                let h1 = self.config.hidden[0];
                let mid_masks = masks(n, (bsz, h1));
                if let Some(ms) = &mid_masks {
                    for (h, m) in hs1.iter_mut().zip(ms) {
                        *h *= m;
                    }
                }
                let (hs2, c2) = seq_forward(l2, &hs1)?;
                let last = hs2.last().expect("non-empty sequence").clone();
                let (_, logits) = self.readout.forward(last.view())?;
                Ok((
                    logits,
                    Cache::Recurrent {
                        l1: c1,
                        mid_masks,
                        l2: c2,
                        last,
                    },
                ))
            }
        }
    }

    fn backward(&self, cache: &Cache<T>, dlogits: &Array2<T>) -> Network<T> {
        let mut grad = self.zeros_like();
        match cache {
            Cache::Feedforward {
                x,
                pre1,
                a1,
                mid_mask,
                pre2,
                a2,
            } => {
                let readout_pre = a2.dot(&self.readout.w) + &self.readout.b;
                let da2 = self.readout.backward(a2.view(), &readout_pre, dlogits, &mut grad.readout);
                let (Layer::Dense(l1), Layer::Dense(l2)) = (&self.layer1, &self.layer2) else {
                    unreachable!()
                };
                let (Layer::Dense(g1), Layer::Dense(g2)) = (&mut grad.layer1, &mut grad.layer2) else {
                    unreachable!()
                };
                let mut da1 = l2.backward(a1.view(), pre2, &da2, g2);
                if let Some(m) = mid_mask {
                    da1 *= m;
                }
                l1.backward(x.view(), pre1, &da1, g1);
            }
            Cache::Recurrent {
                l1,
                mid_masks,
                l2,
                last,
            } => {
                let readout_pre = last.dot(&self.readout.w) + &self.readout.b;
                let dlast = self.readout.backward(last.view(), &readout_pre, dlogits, &mut grad.readout);
                let n = self.config.frames;
                let bsz = last.nrows();
                let mut dhs2: Vec<Array2<T>> = (0..n).map(|_| Array2::zeros((bsz, self.config.hidden[1]))).collect();
                dhs2[n - 1] = dlast;
                let mut dhs1 = seq_backward(&self.layer2, l2, &dhs2, &mut grad.layer2);
                if let Some(ms) = mid_masks {
                    for (d, m) in dhs1.iter_mut().zip(ms) {
                        *d *= m;
                    }
                }
                seq_backward(&self.layer1, l1, &dhs1, &mut grad.layer1);
            }
        }
        grad
    }

    /// Class probabilities `[P(engaged), P(SED)]` per window, dropout off.
    pub fn predict_batch(&self, windows: &[ArrayView2<T>]) -> Result<Array2<T>> {
        let (logits, _) = self.forward_cached::<rand_chacha::ChaCha8Rng>(windows, None)?;
        Ok(softmax(&logits))
    }

    /// Class probabilities for a single window.
    pub fn forward_window(&self, window: ArrayView2<T>) -> Result<[T; 2]> {
        let p = self.predict_batch(&[window])?;
        Ok([p[[0, 0]], p[[0, 1]]])
    }

    /// Weighted cross-entropy without dropout.
    pub fn loss(&self, windows: &[ArrayView2<T>], labels: &[u8], weights: [T; 2]) -> Result<T> {
        let (logits, _) = self.forward_cached::<rand_chacha::ChaCha8Rng>(windows, None)?;
        Ok(weighted_cross_entropy(&logits, labels, weights).0)
    }

    /// Loss and parameter gradients. Dropout masks are drawn from `rng` when given.
    pub fn loss_and_grad<R: Rng>(
        &self,
        windows: &[ArrayView2<T>],
        labels: &[u8],
        weights: [T; 2],
        rng: Option<&mut R>,
    ) -> Result<(T, Network<T>)> {
        if labels.len() != windows.len() {
            return Err(Error::Shape(format!("{} windows, {} labels", windows.len(), labels.len())));
        }
        let (logits, cache) = self.forward_cached(windows, rng)?;
        let (loss, dlogits) = weighted_cross_entropy(&logits, labels, weights);
        Ok((loss, self.backward(&cache, &dlogits)))
    }
}

impl<T: Real> ParamBlocks<T> for Network<T> {
    fn blocks(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        self.layer1.blocks("layer1", &mut out);
        self.layer2.blocks("layer2", &mut out);
        out.push(("readout.w".into(), self.readout.w.as_slice().expect("standard layout")));
        out.push(("readout.b".into(), self.readout.b.as_slice().expect("standard layout")));
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        self.layer1.blocks_mut("layer1", &mut out);
        self.layer2.blocks_mut("layer2", &mut out);
        out.push(("readout.w".into(), self.readout.w.as_slice_mut().expect("standard layout")));
        out.push(("readout.b".into(), self.readout.b.as_slice_mut().expect("standard layout")));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn windows(n: usize, frames: usize, dim: usize, seed: u64) -> Vec<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Array2::from_shape_simple_fn((frames, dim), || rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn probabilities_are_normalized_for_all_kinds() {
        for kind in [ModelKind::Dnn, ModelKind::Gru, ModelKind::Lstm] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let net = Network::<f64>::new(NetworkConfig::new(kind, 5, 3), &mut rng).unwrap();
            let ws = windows(7, 3, 5, 2);
            let views: Vec<_> = ws.iter().map(|w| w.view()).collect();
            let p = net.predict_batch(&views).unwrap();
            for row in p.rows() {
                assert!(row.iter().all(|&x| x > 0.0 && x < 1.0));
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            assert_eq!(net.forward_window(ws[0].view()).unwrap(), net.forward_window(ws[0].view()).unwrap());
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&array![[0.3f64, -1.2], [5.0, 5.0]]);
        let b = softmax(&array![[10.3, 8.8], [-2.0, -2.0]]);
        assert!((&a - &b).iter().all(|d| d.abs() < 1e-12));
        assert_eq!(a[[1, 0]], 0.5);
    }

    #[test]
    fn unit_weights_match_plain_cross_entropy() {
        let logits = array![[0.3f64, -1.2], [2.0, 0.5], [-0.7, 0.1]];
        let labels = [0u8, 1, 1];
        let (l, _) = weighted_cross_entropy(&logits, &labels, [1.0, 1.0]);
        let p = softmax(&logits);
        let plain = -(p[[0, 0]].ln() + p[[1, 1]].ln() + p[[2, 1]].ln()) / 3.0;
        assert!((l - plain).abs() < 1e-15);
    }

    #[test]
    fn window_shape_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::<f64>::new(NetworkConfig::new(ModelKind::Lstm, 5, 3), &mut rng).unwrap();
        let w = Array2::<f64>::zeros((4, 5));
        assert!(matches!(net.forward_window(w.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn param_count_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::<f64>::new(NetworkConfig::new(ModelKind::Lstm, 96, 11), &mut rng).unwrap();
        // 4*32*(96+32+1) + 4*2*(32+2+1) + 2*2 + 2
        assert_eq!(net.param_count(), 16512 + 280 + 6);
        let gru = Network::<f64>::new(NetworkConfig::new(ModelKind::Gru, 96, 11), &mut rng).unwrap();
        assert_eq!(gru.param_count(), 3 * 32 * 129 + 3 * 2 * 35 + 6);
    }
}
