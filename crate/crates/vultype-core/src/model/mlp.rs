//! Linear layers and the two-layer perceptron classification heads.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Outer product `a bᵀ` (len(a) × len(b)).
pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((a.len(), b.len()));
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            m.row_mut(i).assign(&(b * ai));
        }
    }
    m
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected layer `y = Wx + b`, also used as its own gradient
/// container (`zeros_like` + `accumulate`).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Seeded uniform init in ±1/√fan_in.
    pub fn init(out_dim: usize, in_dim: usize, init_seed: u64) -> Linear {
        let mut rng = ChaCha20Rng::seed_from_u64(init_seed);
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut w = Array2::<f64>::zeros((out_dim, in_dim));
        for v in w.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        let mut b = Array1::<f64>::zeros(out_dim);
        for v in b.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        Linear { w, b }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Linear {
        Linear {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Linear {
        Linear {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// Returns (parameter gradients, input gradient).
    pub fn backward(&self, x: &Array1<f64>, dy: &Array1<f64>) -> (Linear, Array1<f64>) {
        let grads = Linear {
            w: outer(dy, x),
            b: dy.clone(),
        };
        (grads, self.w.t().dot(dy))
    }

    pub fn accumulate(&mut self, other: &Linear) {
        self.w += &other.w;
        self.b += &other.b;
    }

    pub fn scale(&mut self, s: f64) {
        self.w *= s;
        self.b *= s;
    }
}

/// Two-layer perceptron head: Linear → ReLU → Linear.
///
/// The ReLU subgradient at exactly zero is taken as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Array1<f64>,
    pre: Array1<f64>,
}

impl Mlp {
    pub fn init(in_dim: usize, hidden_dim: usize, out_dim: usize, init_seed: u64) -> Mlp {
        Mlp {
            hidden: Linear::init(hidden_dim, in_dim, crate::seed::derive(init_seed, "hidden")),
            out: Linear::init(out_dim, hidden_dim, crate::seed::derive(init_seed, "out")),
        }
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            hidden: self.hidden.zeros_like(),
            out: self.out.zeros_like(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.out.out_dim()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Result<(Array1<f64>, MlpCache)> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "mlp expects input of {} but got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let pre = self.hidden.forward(x);
        let act = pre.mapv(|v| v.max(0.0));
        let y = self.out.forward(&act);
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                pre,
            },
        ))
    }

    /// Returns (parameter gradients, input gradient).
    pub fn backward(&self, cache: &MlpCache, dy: &Array1<f64>) -> (Mlp, Array1<f64>) {
        let act = cache.pre.mapv(|v| v.max(0.0));
        let (g_out, d_act) = self.out.backward(&act, dy);
        let d_pre: Array1<f64> = d_act
            .iter()
            .zip(cache.pre.iter())
            .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
            .collect();
        let (g_hidden, dx) = self.hidden.backward(&cache.x, &d_pre);
        (
            Mlp {
                hidden: g_hidden,
                out: g_out,
            },
            dx,
        )
    }

    pub fn accumulate(&mut self, other: &Mlp) {
        self.hidden.accumulate(&other.hidden);
        self.out.accumulate(&other.out);
    }

    pub fn scale(&mut self, s: f64) {
        self.hidden.scale(s);
        self.out.scale(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn linear_forward_known_values() {
        let l = Linear {
            w: ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0]]),
            b: arr1(&[0.5, -0.5]),
        };
        let y = l.forward(&arr1(&[1.0, 1.0]));
        assert_eq!(y, arr1(&[3.5, 6.5]));
    }

    #[test]
    fn linear_init_deterministic_and_bounded() {
        let a = Linear::init(4, 9, 7);
        let b = Linear::init(4, 9, 7);
        assert_eq!(a, b);
        let bound = 1.0 / 3.0;
        assert!(a.w.iter().all(|v| v.abs() < bound));
        assert!(a.w.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn mlp_rejects_wrong_input_size() {
        let m = Mlp::init(3, 5, 2, 1);
        assert!(m.forward(&arr1(&[1.0, 2.0])).is_err());
    }

    fn fd_scalar(f: &dyn Fn(&[f64]) -> f64, x: &mut [f64], i: usize) -> f64 {
        let h = 1e-5;
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(x);
        x[i] = orig - h;
        let fm = f(x);
        x[i] = orig;
        (fp - fm) / (2.0 * h)
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let m = Mlp::init(3, 4, 2, 42);
        let x = arr1(&[0.3, -0.7, 1.1]);
        let c = arr1(&[0.9, -1.3]); // fixed probe direction

        // pack parameters so the probe can perturb any single value
        let mut flat: Vec<f64> = m
            .hidden
            .w
            .iter()
            .chain(m.hidden.b.iter())
            .chain(m.out.w.iter())
            .chain(m.out.b.iter())
            .copied()
            .collect();
        let eval = |p: &[f64]| -> f64 {
            let mut mm = m.clone();
            let mut it = p.iter();
            for v in mm
                .hidden
                .w
                .iter_mut()
                .chain(mm.hidden.b.iter_mut())
                .chain(mm.out.w.iter_mut())
                .chain(mm.out.b.iter_mut())
            {
                *v = *it.next().unwrap();
            }
            let (y, _) = mm.forward(&x).unwrap();
            y.iter().zip(c.iter()).map(|(a, b)| a * b).sum()
        };

        let (y, cache) = m.forward(&x).unwrap();
        assert_eq!(y.len(), 2);
        let (grads, _) = m.backward(&cache, &c);
        let analytic: Vec<f64> = grads
            .hidden
            .w
            .iter()
            .chain(grads.hidden.b.iter())
            .chain(grads.out.w.iter())
            .chain(grads.out.b.iter())
            .copied()
            .collect();

        for i in 0..flat.len() {
            let numeric = fd_scalar(&eval, &mut flat, i);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-4,
                "param {i}: analytic {} vs numeric {}",
                analytic[i],
                numeric
            );
        }
    }

    #[test]
    fn mlp_input_gradient_matches_finite_differences() {
        let m = Mlp::init(4, 3, 2, 5);
        let x0 = arr1(&[0.2, -0.4, 0.9, 0.1]);
        let c = arr1(&[1.0, -0.5]);
        let (_, cache) = m.forward(&x0).unwrap();
        let (_, dx) = m.backward(&cache, &c);
        let mut xv = x0.to_vec();
        let eval = |p: &[f64]| -> f64 {
            let (y, _) = m.forward(&arr1(p)).unwrap();
            y.iter().zip(c.iter()).map(|(a, b)| a * b).sum()
        };
        for i in 0..xv.len() {
            let numeric = fd_scalar(&eval, &mut xv, i);
            let denom = dx[i].abs().max(numeric.abs()).max(1e-8);
            assert!((dx[i] - numeric).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn accumulate_and_scale_compose() {
        let m = Mlp::init(2, 3, 2, 9);
        let mut acc = m.zeros_like();
        acc.accumulate(&m);
        acc.accumulate(&m);
        acc.scale(0.5);
        for (a, b) in acc.hidden.w.iter().zip(m.hidden.w.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
