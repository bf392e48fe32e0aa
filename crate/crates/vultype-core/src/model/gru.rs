//! Gated recurrent node-feature transform.
//!
//! A single GRU cell is run over graph nodes in source (NCS) order;
//! the hidden state emitted at each node becomes its transformed
//! feature. Gate layout follows the common single-bias formulation:
//!
//! ```text
//! r = σ(Wx_r·x + b_r + Wh_r·h)      z = σ(Wx_z·x + b_z + Wh_z·h)
//! n = tanh(Wx_n·x + b_n + r ⊙ (Wh_n·h))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::mlp::{outer, sigmoid};
use crate::error::{Error, Result};
use crate::seed;

/// GRU cell parameters: stacked gate blocks (r, z, n), each `hidden`
/// rows tall. Also serves as its own gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_x: Array2<f64>, // 3h × in
    pub w_h: Array2<f64>, // 3h × h
    pub b: Array1<f64>,   // 3h
}

#[derive(Debug, Clone)]
struct GruStep {
    node: usize,
    x: Array1<f64>,
    h_prev: Array1<f64>,
    r: Array1<f64>,
    z: Array1<f64>,
    n: Array1<f64>,
    hs_n: Array1<f64>,
}

/// Per-step activations from [`GruCell::forward_sequence`].
#[derive(Debug, Clone)]
pub struct GruCache {
    steps: Vec<GruStep>,
    input_dim: usize,
}

impl GruCell {
    pub fn init(input_dim: usize, hidden: usize, init_seed: u64) -> GruCell {
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
        let mut b = Array1::<f64>::zeros(3 * hidden);
        for v in b.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        GruCell {
            w_x: fill(3 * hidden, input_dim, input_dim, "w_x"),
            w_h: fill(3 * hidden, hidden, hidden, "w_h"),
            b,
        }
    }

    pub fn zeros_like(&self) -> GruCell {
        GruCell {
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

    fn step(&self, node: usize, x: ArrayView1<f64>, h_prev: &Array1<f64>) -> (Array1<f64>, GruStep) {
        let h = self.hidden();
        let ax = self.w_x.dot(&x) + &self.b;
        let hs = self.w_h.dot(h_prev);
        let mut r = Array1::<f64>::zeros(h);
        let mut z = Array1::<f64>::zeros(h);
        let mut n = Array1::<f64>::zeros(h);
        let mut hs_n = Array1::<f64>::zeros(h);
        for i in 0..h {
            r[i] = sigmoid(ax[i] + hs[i]);
            z[i] = sigmoid(ax[h + i] + hs[h + i]);
            hs_n[i] = hs[2 * h + i];
            n[i] = (ax[2 * h + i] + r[i] * hs_n[i]).tanh();
        }
        let mut h_new = Array1::<f64>::zeros(h);
        for i in 0..h {
            h_new[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
        }
        let cache = GruStep {
            node,
            x: x.to_owned(),
            h_prev: h_prev.clone(),
            r,
            z,
            n,
            hs_n,
        };
        (h_new, cache)
    }

    /// Run the cell over nodes in the given visit order, starting from
    /// a zero state. Row `v` of the output holds the hidden state
    /// emitted when node `v` was visited.
    pub fn forward_sequence(
        &self,
        xs: &Array2<f64>,
        order: &[usize],
    ) -> Result<(Array2<f64>, GruCache)> {
        let v = xs.nrows();
        if v == 0 {
            return Err(Error::Validation("gru transform needs at least one node".into()));
        }
        if xs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "gru expects {}-dim features, got {}",
                self.input_dim(),
                xs.ncols()
            )));
        }
        if order.len() != v {
            return Err(Error::Validation(format!(
                "visit order covers {} nodes but the graph has {v}",
                order.len()
            )));
        }
        let mut seen = vec![false; v];
        for &idx in order {
            if idx >= v || seen[idx] {
                return Err(Error::Validation("visit order is not a permutation".into()));
            }
            seen[idx] = true;
        }

        let mut out = Array2::<f64>::zeros((v, self.hidden()));
        let mut cache = GruCache {
            steps: Vec::with_capacity(v),
            input_dim: self.input_dim(),
        };
        let mut h = Array1::<f64>::zeros(self.hidden());
        for &idx in order {
            let (h_new, step) = self.step(idx, xs.row(idx), &h);
            out.row_mut(idx).assign(&h_new);
            cache.steps.push(step);
            h = h_new;
        }
        Ok((out, cache))
    }

    /// Backpropagate through the whole visit sequence. Returns
    /// (parameter gradients, input-feature gradients).
    pub fn backward_sequence(&self, cache: &GruCache, d_out: &Array2<f64>) -> (GruCell, Array2<f64>) {
        let h = self.hidden();
        let v = cache.steps.len();
        let mut grads = self.zeros_like();
        let mut dx_all = Array2::<f64>::zeros((v, cache.input_dim));
        let mut carry = Array1::<f64>::zeros(h);

        for step in cache.steps.iter().rev() {
            let dh = &d_out.row(step.node).to_owned() + &carry;
            let mut dh_prev = Array1::<f64>::zeros(h);
            let mut da = Array1::<f64>::zeros(3 * h);
            let mut dhs = Array1::<f64>::zeros(3 * h);
            for i in 0..h {
                let dn = dh[i] * (1.0 - step.z[i]);
                let dz = dh[i] * (step.h_prev[i] - step.n[i]);
                dh_prev[i] = dh[i] * step.z[i];
                let da_n = dn * (1.0 - step.n[i] * step.n[i]);
                let dr = da_n * step.hs_n[i];
                let dhs_n = da_n * step.r[i];
                let da_r = dr * step.r[i] * (1.0 - step.r[i]);
                let da_z = dz * step.z[i] * (1.0 - step.z[i]);
                da[i] = da_r;
                da[h + i] = da_z;
                da[2 * h + i] = da_n;
                dhs[i] = da_r;
                dhs[h + i] = da_z;
                dhs[2 * h + i] = dhs_n;
            }
            grads.w_x += &outer(&da, &step.x);
            grads.b += &da;
            grads.w_h += &outer(&dhs, &step.h_prev);
            dx_all.row_mut(step.node).assign(&self.w_x.t().dot(&da));
            carry = dh_prev + self.w_h.t().dot(&dhs);
        }
        (grads, dx_all)
    }

    pub fn accumulate(&mut self, other: &GruCell) {
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
