//! Bidirectional LSTM sequence encoder.
//!
//! Two independent LSTM cells sweep the embedded token sequence, one
//! left→right and one right→left; their hidden states are
//! concatenated per position.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::mlp::{outer, sigmoid};
use crate::error::{Error, Result};
use crate::seed;

/// LSTM cell parameters: stacked gate blocks (i, f, g, o), each
/// `hidden` rows tall. Also serves as its own gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_x: Array2<f64>, // 4h × in
    pub w_h: Array2<f64>, // 4h × h
    pub b: Array1<f64>,   // 4h
}

#[derive(Debug, Clone)]
struct LstmStep {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    c: Array1<f64>,
}

/// Per-step activations from [`LstmCell::forward_sequence`].
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<LstmStep>,
    input_dim: usize,
}

impl LstmCell {
    pub fn init(input_dim: usize, hidden: usize, init_seed: u64) -> LstmCell {
        let fill = |rows: usize, cols: usize, fan_in: usize, tag: &str| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(init_seed, tag));
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut m = Array2::<f64>::zeros((rows, cols));
            for v in m.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            m
        };
        let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(init_seed, "b"));
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut b = Array1::<f64>::zeros(4 * hidden);
        for v in b.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        LstmCell {
            w_x: fill(4 * hidden, input_dim, input_dim, "w_x"),
            w_h: fill(4 * hidden, hidden, hidden, "w_h"),
            b,
        }
    }

    pub fn zeros_like(&self) -> LstmCell {
        LstmCell {
            w_x: Array2::zeros(self.w_x.raw_dim()),
            w_h: Array2::zeros(self.w_h.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }

    fn step(
        &self,
        x: ArrayView1<f64>,
        h_prev: &Array1<f64>,
        c_prev: &Array1<f64>,
    ) -> (Array1<f64>, Array1<f64>, LstmStep) {
        let h = self.hidden();
        let a = self.w_x.dot(&x) + self.w_h.dot(h_prev) + &self.b;
        let mut i = Array1::<f64>::zeros(h);
        let mut f = Array1::<f64>::zeros(h);
        let mut g = Array1::<f64>::zeros(h);
        let mut o = Array1::<f64>::zeros(h);
        for k in 0..h {
            i[k] = sigmoid(a[k]);
            f[k] = sigmoid(a[h + k]);
            g[k] = a[2 * h + k].tanh();
            o[k] = sigmoid(a[3 * h + k]);
        }
        let mut c = Array1::<f64>::zeros(h);
        let mut h_new = Array1::<f64>::zeros(h);
        for k in 0..h {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            h_new[k] = o[k] * c[k].tanh();
        }
        let cache = LstmStep {
            x: x.to_owned(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            i,
            f,
            g,
            o,
            c: c.clone(),
        };
        (h_new, c, cache)
    }

    /// Run the cell over rows of `xs` in order, from zero state.
    /// Returns the per-position hidden states (len × hidden).
    pub fn forward_sequence(&self, xs: &Array2<f64>) -> Result<(Array2<f64>, LstmCache)> {
        let len = xs.nrows();
        if len == 0 {
            return Err(Error::Validation("lstm needs a non-empty sequence".into()));
        }
        if xs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "lstm expects {}-dim inputs, got {}",
                self.input_dim(),
                xs.ncols()
            )));
        }
        let mut out = Array2::<f64>::zeros((len, self.hidden()));
        let mut cache = LstmCache {
            steps: Vec::with_capacity(len),
            input_dim: self.input_dim(),
        };
        let mut h = Array1::<f64>::zeros(self.hidden());
        let mut c = Array1::<f64>::zeros(self.hidden());
        for t in 0..len {
            let (h_new, c_new, step) = self.step(xs.row(t), &h, &c);
            out.row_mut(t).assign(&h_new);
            cache.steps.push(step);
            h = h_new;
            c = c_new;
        }
        Ok((out, cache))
    }

    /// Backpropagate through time. Returns (parameter gradients,
    /// input gradients).
    pub fn backward_sequence(&self, cache: &LstmCache, d_out: &Array2<f64>) -> (LstmCell, Array2<f64>) {
        let h = self.hidden();
        let len = cache.steps.len();
        let mut grads = self.zeros_like();
        let mut dx_all = Array2::<f64>::zeros((len, cache.input_dim));
        let mut dh_carry = Array1::<f64>::zeros(h);
        let mut dc_carry = Array1::<f64>::zeros(h);

        for (t, step) in cache.steps.iter().enumerate().rev() {
            let dh = &d_out.row(t).to_owned() + &dh_carry;
            let mut da = Array1::<f64>::zeros(4 * h);
            let mut dc_prev = Array1::<f64>::zeros(h);
            for k in 0..h {
                let tc = step.c[k].tanh();
                let d_o = dh[k] * tc;
                let dc = dc_carry[k] + dh[k] * step.o[k] * (1.0 - tc * tc);
                let d_i = dc * step.g[k];
                let d_f = dc * step.c_prev[k];
                let d_g = dc * step.i[k];
                dc_prev[k] = dc * step.f[k];
                da[k] = d_i * step.i[k] * (1.0 - step.i[k]);
                da[h + k] = d_f * step.f[k] * (1.0 - step.f[k]);
                da[2 * h + k] = d_g * (1.0 - step.g[k] * step.g[k]);
                da[3 * h + k] = d_o * step.o[k] * (1.0 - step.o[k]);
            }
            grads.w_x += &outer(&da, &step.x);
            grads.w_h += &outer(&da, &step.h_prev);
            grads.b += &da;
            dx_all.row_mut(t).assign(&self.w_x.t().dot(&da));
            dh_carry = self.w_h.t().dot(&da);
            dc_carry = dc_prev;
        }
        (grads, dx_all)
    }

    pub fn accumulate(&mut self, other: &LstmCell) {
        self.w_x += &other.w_x;
        self.w_h += &other.w_h;
        self.b += &other.b;
    }

    pub fn scale(&mut self, s: f64) {
        self.w_x *= s;
        self.w_h *= s;
        self.b *= s;
    }
}

/// Caches from both directions of a bidirectional sweep.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

fn reverse_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(m.raw_dim());
    let n = m.nrows();
    for t in 0..n {
        out.row_mut(t).assign(&m.row(n - 1 - t));
    }
    out
}

/// Per-position concatenation of forward and reversed-backward hidden
/// states: output is len × 2h.
pub fn bilstm_forward(
    fwd: &LstmCell,
    bwd: &LstmCell,
    xs: &Array2<f64>,
) -> Result<(Array2<f64>, BiLstmCache)> {
    if fwd.hidden() != bwd.hidden() {
        return Err(Error::Shape(format!(
            "direction hidden sizes differ: {} vs {}",
            fwd.hidden(),
            bwd.hidden()
        )));
    }
    let (h_f, cache_f) = fwd.forward_sequence(xs)?;
    let xs_rev = reverse_rows(xs);
    let (h_b_rev, cache_b) = bwd.forward_sequence(&xs_rev)?;
    let len = xs.nrows();
    let h = fwd.hidden();
    let mut out = Array2::<f64>::zeros((len, 2 * h));
    for t in 0..len {
        out.slice_mut(s![t, ..h]).assign(&h_f.row(t));
        out.slice_mut(s![t, h..]).assign(&h_b_rev.row(len - 1 - t));
    }
    Ok((
        out,
        BiLstmCache {
            fwd: cache_f,
            bwd: cache_b,
        },
    ))
}

/// Backward pass of [`bilstm_forward`]. Returns gradients for the two
/// cells and for the inputs.
pub fn bilstm_backward(
    fwd: &LstmCell,
    bwd: &LstmCell,
    cache: &BiLstmCache,
    d_concat: &Array2<f64>,
) -> (LstmCell, LstmCell, Array2<f64>) {
    let len = d_concat.nrows();
    let h = fwd.hidden();
    let mut d_f = Array2::<f64>::zeros((len, h));
    let mut d_b_rev = Array2::<f64>::zeros((len, h));
    for t in 0..len {
        d_f.row_mut(t).assign(&d_concat.slice(s![t, ..h]));
        d_b_rev
            .row_mut(len - 1 - t)
            .assign(&d_concat.slice(s![t, h..]));
    }
    let (g_f, dx_f) = fwd.backward_sequence(&cache.fwd, &d_f);
    let (g_b, dx_b_rev) = bwd.backward_sequence(&cache.bwd, &d_b_rev);
    let dx = dx_f + reverse_rows(&dx_b_rev);
    (g_f, g_b, dx)
}
