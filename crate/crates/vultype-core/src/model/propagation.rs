//! Differentiated propagation and the stacked-propagation diagnostic.
//!
//! The propagation layer averages the first `L` powers of the
//! normalized adjacency applied to the transformed features, then
//! blends the original features back in with a teleport weight:
//!
//! ```text
//! out = (1 − α) · (1/L) · Σ_{i=0}^{L−1} Â^i H⁰  +  α · H⁰
//! ```
//!
//! It is parameter-free, and the operator is symmetric, so the
//! backward pass applies the same operator to the upstream gradient.

use ndarray::Array2;

use crate::codegraph::NormalizedAdjacency;
use crate::error::{Error, Result};

fn check_args(h0: &Array2<f64>, adj: &NormalizedAdjacency, layers: usize, alpha: f64) -> Result<()> {
    if layers == 0 {
        return Err(Error::Validation("propagation needs at least one layer".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!(
            "teleport weight must lie in [0,1], got {alpha}"
        )));
    }
    if h0.nrows() != adj.dim() {
        return Err(Error::Shape(format!(
            "features have {} rows but the adjacency has dimension {}",
            h0.nrows(),
            adj.dim()
        )));
    }
    Ok(())
}

/// Iteratively evaluate the propagation (never materializing matrix
/// powers): repeated sparse application of Â with a running sum.
pub fn differentiated_propagation(
    h0: &Array2<f64>,
    adj: &NormalizedAdjacency,
    layers: usize,
    alpha: f64,
) -> Result<Array2<f64>> {
    check_args(h0, adj, layers, alpha)?;
    let mut current = h0.clone();
    let mut sum = h0.clone();
    for _ in 1..layers {
        current = adj.apply(&current)?;
        sum += &current;
    }
    let mut out = sum * ((1.0 - alpha) / layers as f64);
    out.scaled_add(alpha, h0);
    Ok(out)
}

/// Backward pass. The propagation operator
/// `(1−α)/L · ΣÂ^i + αI` is symmetric, so the input gradient is the
/// same operator applied to the upstream gradient.
pub fn differentiated_propagation_backward(
    d_out: &Array2<f64>,
    adj: &NormalizedAdjacency,
    layers: usize,
    alpha: f64,
) -> Result<Array2<f64>> {
    differentiated_propagation(d_out, adj, layers, alpha)
}

/// Apply Â to X exactly `k` times (the over-smoothing diagnostic;
/// k = 0 returns X unchanged).
pub fn propagate_k(x: &Array2<f64>, adj: &NormalizedAdjacency, k: usize) -> Result<Array2<f64>> {
    if x.nrows() != adj.dim() {
        return Err(Error::Shape(format!(
            "features have {} rows but the adjacency has dimension {}",
            x.nrows(),
            adj.dim()
        )));
    }
    let mut cur = x.clone();
    for _ in 0..k {
        cur = adj.apply(&cur)?;
    }
    Ok(cur)
}

fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// The plain two-layer graph-convolution reference:
/// `softmax(Â · ReLU(Â · X · W₀) · W₁)`, rows normalized. Used only as
/// the over-smoothing comparison path, so it has no backward pass.
pub fn vanilla_gcn(
    x: &Array2<f64>,
    adj: &NormalizedAdjacency,
    w0: &Array2<f64>,
    w1: &Array2<f64>,
) -> Result<Array2<f64>> {
    if x.ncols() != w0.nrows() {
        return Err(Error::Shape(format!(
            "X has {} columns but W0 has {} rows",
            x.ncols(),
            w0.nrows()
        )));
    }
    if w0.ncols() != w1.nrows() {
        return Err(Error::Shape(format!(
            "W0 has {} columns but W1 has {} rows",
            w0.ncols(),
            w1.nrows()
        )));
    }
    let h1 = adj.apply(&x.dot(w0))?.mapv(|v| v.max(0.0));
    let h2 = adj.apply(&h1.dot(w1))?;
    Ok(softmax_rows(&h2))
}

/// Mean pairwise cosine similarity between rows — the over-smoothing
/// measure (1.0 means all rows point the same way). Zero rows
/// contribute similarity 0 with everything.
pub fn mean_pairwise_cosine(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 1.0;
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let denom = norms[i] * norms[j];
            let cos = if denom > 0.0 {
                m.row(i).dot(&m.row(j)) / denom
            } else {
                0.0
            };
            total += cos;
            pairs += 1;
        }
    }
    total / pairs as f64
}
