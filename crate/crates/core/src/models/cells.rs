//! LSTM, GRU and dense layers with batched forward and backward passes.
//!
//! Inputs are row-major batches (`B x in`). Gate blocks are packed
//! column-wise: LSTM `[input, forget, candidate, output]`, GRU
//! `[update, reset, candidate]`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nested;
use crate::error::{Error, Result};
use crate::scalar::Real;

fn uniform<T: Real, R: Rng>(rng: &mut R, shape: (usize, usize), limit: f64) -> Array2<T> {
    Array2::from_shape_simple_fn(shape, || T::c(rng.random_range(-limit..=limit)))
}

fn check_cols<T>(what: &str, m: &ArrayView2<T>, cols: usize) -> Result<()> {
    if m.ncols() != cols {
        return Err(Error::Shape(format!("{what}: expected {cols} columns, got {}", m.ncols())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LstmCell<T> {
    #[serde(with = "nested::matrix")]
    pub w_x: Array2<T>,
    #[serde(with = "nested::matrix")]
    pub w_h: Array2<T>,
    #[serde(with = "nested::vector")]
    pub b: Array1<T>,
}

/// Activations saved by one LSTM step for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStep<T> {
    pub x: Array2<T>,
    pub h_prev: Array2<T>,
    pub c_prev: Array2<T>,
    /// Activated gates `[i, f, g, o]`.
    pub gates: Array2<T>,
    pub c: Array2<T>,
    pub tanh_c: Array2<T>,
    pub h: Array2<T>,
}

impl<T: Real> LstmCell<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            w_x: Array2::zeros((input, 4 * hidden)),
            w_h: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Fan-in scaled uniform weights, forget-gate bias 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = LstmCell {
            w_x: uniform(rng, (input, 4 * hidden), (1.0 / input as f64).sqrt()),
            w_h: uniform(rng, (hidden, 4 * hidden), (1.0 / hidden as f64).sqrt()),
            b: Array1::zeros(4 * hidden),
        };
        cell.b.slice_mut(s![hidden..2 * hidden]).fill(T::one());
        cell
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn step(&self, x: ArrayView2<T>, h_prev: ArrayView2<T>, c_prev: ArrayView2<T>) -> Result<LstmStep<T>> {
        let hd = self.hidden();
        check_cols("lstm input", &x, self.input_dim())?;
        check_cols("lstm hidden state", &h_prev, hd)?;
        check_cols("lstm cell state", &c_prev, hd)?;
        if x.nrows() != h_prev.nrows() || x.nrows() != c_prev.nrows() {
            return Err(Error::Shape("lstm batch sizes differ".into()));
        }
        let mut gates = x.dot(&self.w_x) + h_prev.dot(&self.w_h) + &self.b;
        let bsz = x.nrows();
        let mut c = Array2::zeros((bsz, hd));
        let mut tanh_c = Array2::zeros((bsz, hd));
        let mut h = Array2::zeros((bsz, hd));
        for r in 0..bsz {
            for k in 0..hd {
                let i = gates[[r, k]].sigmoid();
                let f = gates[[r, hd + k]].sigmoid();
                let g = gates[[r, 2 * hd + k]].tanh();
                let o = gates[[r, 3 * hd + k]].sigmoid();
                gates[[r, k]] = i;
                gates[[r, hd + k]] = f;
                gates[[r, 2 * hd + k]] = g;
                gates[[r, 3 * hd + k]] = o;
                let cv = f * c_prev[[r, k]] + i * g;
                let tc = cv.tanh();
                c[[r, k]] = cv;
                tanh_c[[r, k]] = tc;
                h[[r, k]] = o * tc;
            }
        }
        Ok(LstmStep {
            x: x.to_owned(),
            h_prev: h_prev.to_owned(),
            c_prev: c_prev.to_owned(),
            gates,
            c,
            tanh_c,
            h,
        })
    }

    /// Single-sample cell update, returning `(h_t, c_t)`.
    pub fn forward(&self, x: ArrayView1<T>, h_prev: ArrayView1<T>, c_prev: ArrayView1<T>) -> Result<(Array1<T>, Array1<T>)> {
        let st = self.step(x.insert_axis(Axis(0)), h_prev.insert_axis(Axis(0)), c_prev.insert_axis(Axis(0)))?;
        Ok((st.h.row(0).to_owned(), st.c.row(0).to_owned()))
    }

    /// Runs the cell over a sequence from zero state.
    pub fn sequence(&self, xs: &[Array2<T>]) -> Result<Vec<LstmStep<T>>> {
        let bsz = xs.first().map_or(0, |x| x.nrows());
        let hd = self.hidden();
        let mut h = Array2::zeros((bsz, hd));
        let mut c = Array2::zeros((bsz, hd));
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let st = self.step(x.view(), h.view(), c.view())?;
            h = st.h.clone();
            c = st.c.clone();
            steps.push(st);
        }
        Ok(steps)
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient arriving
    /// at `h_t` from above; returns the gradient with respect to each input.
    pub fn backward(&self, steps: &[LstmStep<T>], dhs: &[Array2<T>], grad: &mut LstmCell<T>) -> Vec<Array2<T>> {
        let hd = self.hidden();
        let bsz = steps.first().map_or(0, |s| s.x.nrows());
        let mut dh_next = Array2::<T>::zeros((bsz, hd));
        let mut dc_next = Array2::<T>::zeros((bsz, hd));
        let mut dxs = vec![Array2::zeros((0, 0)); steps.len()];
        let one = T::one();
        for t in (0..steps.len()).rev() {
            let st = &steps[t];
            let mut dz = Array2::<T>::zeros((bsz, 4 * hd));
            for r in 0..bsz {
                for k in 0..hd {
                    let i = st.gates[[r, k]];
                    let f = st.gates[[r, hd + k]];
                    let g = st.gates[[r, 2 * hd + k]];
                    let o = st.gates[[r, 3 * hd + k]];
                    let tc = st.tanh_c[[r, k]];
                    let dh = dhs[t][[r, k]] + dh_next[[r, k]];
                    let dc = dc_next[[r, k]] + dh * o * (one - tc * tc);
                    dz[[r, k]] = dc * g * i * (one - i);
                    dz[[r, hd + k]] = dc * st.c_prev[[r, k]] * f * (one - f);
                    dz[[r, 2 * hd + k]] = dc * i * (one - g * g);
                    dz[[r, 3 * hd + k]] = dh * tc * o * (one - o);
                    dc_next[[r, k]] = dc * f;
                }
            }
            grad.w_x += &st.x.t().dot(&dz);
            grad.w_h += &st.h_prev.t().dot(&dz);
            grad.b += &dz.sum_axis(Axis(0));
            dxs[t] = dz.dot(&self.w_x.t());
            dh_next = dz.dot(&self.w_h.t());
        }
        dxs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GruCell<T> {
    #[serde(with = "nested::matrix")]
    pub w_x: Array2<T>,
    #[serde(with = "nested::matrix")]
    pub w_h: Array2<T>,
    #[serde(with = "nested::vector")]
    pub b: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct GruStep<T> {
    pub x: Array2<T>,
    pub h_prev: Array2<T>,
    pub z: Array2<T>,
    pub r: Array2<T>,
    pub n: Array2<T>,
    /// `r * h_prev`, the input of the candidate's recurrent product.
    pub rh: Array2<T>,
    pub h: Array2<T>,
}

impl<T: Real> GruCell<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_x: Array2::zeros((input, 3 * hidden)),
            w_h: Array2::zeros((hidden, 3 * hidden)),
            b: Array1::zeros(3 * hidden),
        }
    }

    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        GruCell {
            w_x: uniform(rng, (input, 3 * hidden), (1.0 / input as f64).sqrt()),
            w_h: uniform(rng, (hidden, 3 * hidden), (1.0 / hidden as f64).sqrt()),
            b: Array1::zeros(3 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn step(&self, x: ArrayView2<T>, h_prev: ArrayView2<T>) -> Result<GruStep<T>> {
        let hd = self.hidden();
        check_cols("gru input", &x, self.input_dim())?;
        check_cols("gru hidden state", &h_prev, hd)?;
        if x.nrows() != h_prev.nrows() {
            return Err(Error::Shape("gru batch sizes differ".into()));
        }
        let ax = x.dot(&self.w_x) + &self.b;
        let ah = h_prev.dot(&self.w_h.slice(s![.., ..2 * hd]));
        let bsz = x.nrows();
        let mut z = Array2::zeros((bsz, hd));
        let mut r = Array2::zeros((bsz, hd));
        for b in 0..bsz {
            for k in 0..hd {
                z[[b, k]] = (ax[[b, k]] + ah[[b, k]]).sigmoid();
                r[[b, k]] = (ax[[b, hd + k]] + ah[[b, hd + k]]).sigmoid();
            }
        }
        let rh = &r * &h_prev;
        let an = rh.dot(&self.w_h.slice(s![.., 2 * hd..])) + ax.slice(s![.., 2 * hd..]);
        let n = an.mapv(T::tanh);
        let mut h = Array2::zeros((bsz, hd));
        for b in 0..bsz {
            for k in 0..hd {
                h[[b, k]] = (T::one() - z[[b, k]]) * h_prev[[b, k]] + z[[b, k]] * n[[b, k]];
            }
        }
        Ok(GruStep {
            x: x.to_owned(),
            h_prev: h_prev.to_owned(),
            z,
            r,
            n,
            rh,
            h,
        })
    }

    pub fn forward(&self, x: ArrayView1<T>, h_prev: ArrayView1<T>) -> Result<Array1<T>> {
        let st = self.step(x.insert_axis(Axis(0)), h_prev.insert_axis(Axis(0)))?;
        Ok(st.h.row(0).to_owned())
    }

    pub fn sequence(&self, xs: &[Array2<T>]) -> Result<Vec<GruStep<T>>> {
        let bsz = xs.first().map_or(0, |x| x.nrows());
        let mut h = Array2::zeros((bsz, self.hidden()));
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let st = self.step(x.view(), h.view())?;
            h = st.h.clone();
            steps.push(st);
        }
        Ok(steps)
    }

    pub fn backward(&self, steps: &[GruStep<T>], dhs: &[Array2<T>], grad: &mut GruCell<T>) -> Vec<Array2<T>> {
        let hd = self.hidden();
        let bsz = steps.first().map_or(0, |s| s.x.nrows());
        let one = T::one();
        let w_hzr = self.w_h.slice(s![.., ..2 * hd]);
        let w_hn = self.w_h.slice(s![.., 2 * hd..]);
        let mut dh_next = Array2::<T>::zeros((bsz, hd));
        let mut dxs = vec![Array2::zeros((0, 0)); steps.len()];
        for t in (0..steps.len()).rev() {
            let st = &steps[t];
            let dh = &dhs[t] + &dh_next;
            let mut da = Array2::<T>::zeros((bsz, 3 * hd));
            let mut dh_prev = Array2::<T>::zeros((bsz, hd));
            for b in 0..bsz {
                for k in 0..hd {
                    let (z, n, hp) = (st.z[[b, k]], st.n[[b, k]], st.h_prev[[b, k]]);
                    let g = dh[[b, k]];
                    da[[b, k]] = g * (n - hp) * z * (one - z);
                    da[[b, 2 * hd + k]] = g * z * (one - n * n);
                    dh_prev[[b, k]] = g * (one - z);
                }
            }
            let da_n = da.slice(s![.., 2 * hd..]).to_owned();
            let d_rh = da_n.dot(&w_hn.t());
            for b in 0..bsz {
                for k in 0..hd {
                    let r = st.r[[b, k]];
                    da[[b, hd + k]] = d_rh[[b, k]] * st.h_prev[[b, k]] * r * (one - r);
                    dh_prev[[b, k]] += d_rh[[b, k]] * r;
                }
            }
            let da_zr = da.slice(s![.., ..2 * hd]);
            grad.w_x += &st.x.t().dot(&da);
            grad.b += &da.sum_axis(Axis(0));
            {
                let mut g_zr = grad.w_h.slice_mut(s![.., ..2 * hd]);
                g_zr += &st.h_prev.t().dot(&da_zr);
            }
            {
                let mut g_n = grad.w_h.slice_mut(s![.., 2 * hd..]);
                g_n += &st.rh.t().dot(&da_n);
            }
            dh_prev += &da_zr.dot(&w_hzr.t());
            dxs[t] = da.dot(&self.w_x.t());
            dh_next = dh_prev;
        }
        dxs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Dense<T> {
    #[serde(with = "nested::matrix")]
    pub w: Array2<T>,
    #[serde(with = "nested::vector")]
    pub b: Array1<T>,
    pub activation: Activation,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
            activation,
        }
    }

    pub fn init<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / input as f64).sqrt(),
            Activation::Identity => (1.0 / input as f64).sqrt(),
        };
        Dense {
            w: uniform(rng, (input, output), limit),
            b: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Returns `(pre-activation, output)`.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        check_cols("dense input", &x, self.input_dim())?;
        let pre = x.dot(&self.w) + &self.b;
        let out = match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.mapv(T::relu),
        };
        Ok((pre, out))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: ArrayView2<T>, pre: &Array2<T>, dout: &Array2<T>, grad: &mut Dense<T>) -> Array2<T> {
        let dpre = match self.activation {
            Activation::Identity => dout.clone(),
            Activation::Relu => {
                let mut d = dout.clone();
                d.zip_mut_with(pre, |g, &p| {
                    if p <= T::zero() {
                        *g = T::zero();
                    }
                });
                d
            }
        };
        grad.w += &x.t().dot(&dpre);
        grad.b += &dpre.sum_axis(Axis(0));
        dpre.dot(&self.w.t())
    }
}
