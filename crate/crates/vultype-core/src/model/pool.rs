//! Hybrid pooling: per-dimension average plus maximum over rows.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Row count and per-column argmax rows saved for the backward pass.
#[derive(Debug, Clone)]
pub struct PoolCache {
    rows: usize,
    argmax: Vec<usize>,
}

/// Pool a matrix (rows = nodes or positions) down to one vector:
/// `p_j = mean_i(M_ij) + max_i(M_ij)`. Ties in the max go to the
/// first row, matching the backward routing.
pub fn hybrid_pool(m: &Array2<f64>) -> Result<(Array1<f64>, PoolCache)> {
    let rows = m.nrows();
    if rows == 0 {
        return Err(Error::Validation("cannot pool an empty matrix".into()));
    }
    let cols = m.ncols();
    let mut out = Array1::<f64>::zeros(cols);
    let mut argmax = vec![0usize; cols];
    for j in 0..cols {
        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..rows {
            let v = m[(i, j)];
            sum += v;
            if v > best {
                best = v;
                argmax[j] = i;
            }
        }
        out[j] = sum / rows as f64 + best;
    }
    Ok((out, PoolCache { rows, argmax }))
}

/// Backward pass: the average spreads its gradient uniformly, the max
/// routes its gradient to the winning row.
pub fn hybrid_pool_backward(cache: &PoolCache, d_out: &Array1<f64>) -> Array2<f64> {
    let cols = d_out.len();
    let mut dm = Array2::<f64>::zeros((cache.rows, cols));
    for j in 0..cols {
        let share = d_out[j] / cache.rows as f64;
        for i in 0..cache.rows {
            dm[(i, j)] = share;
        }
        dm[(cache.argmax[j], j)] += d_out[j];
    }
    dm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;

    #[test]
    fn equal_rows_pool_to_twice_the_row() {
        let m = arr2(&[[0.5, -1.0, 2.0], [0.5, -1.0, 2.0], [0.5, -1.0, 2.0]]);
        let (p, _) = hybrid_pool(&m).unwrap();
        assert_eq!(p, arr1(&[1.0, -2.0, 4.0]));
    }

    #[test]
    fn single_row_pools_to_twice_itself() {
        let m = arr2(&[[0.3, 0.0, -0.7]]);
        let (p, _) = hybrid_pool(&m).unwrap();
        assert_eq!(p, arr1(&[0.6, 0.0, -1.4]));
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = Array2::<f64>::zeros((0, 3));
        assert!(hybrid_pool(&m).is_err());
    }

    #[test]
    fn known_mixed_values() {
        let m = arr2(&[[1.0, -2.0], [3.0, 0.0]]);
        let (p, _) = hybrid_pool(&m).unwrap();
        // col 0: mean 2 + max 3; col 1: mean -1 + max 0
        assert_eq!(p, arr1(&[5.0, -1.0]));
    }

    proptest! {
        #[test]
        fn prop_permutation_invariant(
            vals in proptest::collection::vec(-10.0f64..10.0, 12),
            swap in (0usize..4, 0usize..4),
        ) {
            let m = Array2::from_shape_vec((4, 3), vals).unwrap();
            let mut permuted = m.clone();
            let (a, b) = swap;
            if a != b {
                let ra = m.row(a).to_owned();
                let rb = m.row(b).to_owned();
                permuted.row_mut(a).assign(&rb);
                permuted.row_mut(b).assign(&ra);
            }
            let (p1, _) = hybrid_pool(&m).unwrap();
            let (p2, _) = hybrid_pool(&permuted).unwrap();
            for (x, y) in p1.iter().zip(p2.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = arr2(&[[0.4, -0.6], [1.2, 0.3], [-0.5, 0.9]]);
        let d_out = arr1(&[0.7, -1.1]);
        let (_, cache) = hybrid_pool(&m).unwrap();
        let dm = hybrid_pool_backward(&cache, &d_out);

        let mut flat: Vec<f64> = m.iter().copied().collect();
        let eval = |vals: &[f64]| -> f64 {
            let mm = Array2::from_shape_vec((3, 2), vals.to_vec()).unwrap();
            let (p, _) = hybrid_pool(&mm).unwrap();
            p.iter().zip(d_out.iter()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in 0..flat.len() {
            let orig = flat[i];
            flat[i] = orig + h;
            let fp = eval(&flat);
            flat[i] = orig - h;
            let fm = eval(&flat);
            flat[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = dm.as_slice().unwrap()[i];
            assert!(
                (analytic - numeric).abs() < 1e-6,
                "entry {i}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn backward_routes_max_to_first_winner_on_ties() {
        let m = arr2(&[[2.0], [2.0]]);
        let (_, cache) = hybrid_pool(&m).unwrap();
        let dm = hybrid_pool_backward(&cache, &arr1(&[1.0]));
        // average share 0.5 each; max share lands on row 0
        assert_eq!(dm, arr2(&[[1.5], [0.5]]));
    }
}
