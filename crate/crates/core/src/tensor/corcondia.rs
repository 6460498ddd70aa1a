//! Core consistency diagnostic.
//!
//! With the factors held fixed, the least-squares Tucker core is
//! `G = X ×₁ U⁺ ×₂ T⁺ ×₃ W⁺`. A model that is exactly trilinear has a
//! superdiagonal identity core; the score `100 · (1 − ‖G − I‖²_F / R)`
//! measures the departure from that.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CpModel, SparseTensor3};
use crate::linalg::pinv;
use crate::Result;

/// Relative eigenvalue cutoff for the factor Gram pseudo-inverses.
const PINV_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreConsistency {
    pub score: f64,
    /// Some factor matrix lacked full column rank and was pseudo-inverted.
    pub rank_deficient: bool,
}

/// Least-squares core for fixed factors, as a flat `R×R×R` array indexed
/// `(a·R + b)·R + c` for user component `a`, thread component `b`, week
/// component `c`. The flag reports a rank-deficient factor.
pub fn core_tensor(x: &SparseTensor3, model: &CpModel) -> Result<(Vec<f64>, bool)> {
    model.check_shape(x)?;
    let rank = model.rank;
    let (up, du) = pinv(&model.users, PINV_REL_TOL);
    let (tp, dt) = pinv(&model.threads, PINV_REL_TOL);
    let (wp, dw) = pinv(&model.weeks, PINV_REL_TOL);
    let up = up.transpose();
    let tp = tp.transpose();
    let wp = wp.transpose();

    let nk = x.shape().2;
    let rr = rank * rank;
    // Per-slice projections Y_k = U⁺ X(:,:,k) T⁺ᵀ.
    let mut slices = vec![0.0; nk * rr];
    for &(i, j, k, v) in x.entries() {
        let ua = up.row(i);
        let tb = tp.row(j);
        let dst = &mut slices[k * rr..(k + 1) * rr];
        for a in 0..rank {
            let s = v * ua[a];
            if s == 0.0 {
                continue;
            }
            let row = &mut dst[a * rank..(a + 1) * rank];
            for (d, &t) in row.iter_mut().zip(tb) {
                *d += s * t;
            }
        }
    }
    let mut core = vec![0.0; rank * rr];
    for k in 0..nk {
        let wc = wp.row(k);
        let y = &slices[k * rr..(k + 1) * rr];
        for ab in 0..rr {
            let yv = y[ab];
            if yv == 0.0 {
                continue;
            }
            let dst = &mut core[ab * rank..(ab + 1) * rank];
            for (d, &w) in dst.iter_mut().zip(wc) {
                *d += yv * w;
            }
        }
    }
    Ok((core, du || dt || dw))
}

/// Core consistency of `model` on `x`; 100 for an exactly trilinear fit.
pub fn corcondia(x: &SparseTensor3, model: &CpModel) -> Result<CoreConsistency> {
    let (core, rank_deficient) = core_tensor(x, model)?;
    let rank = model.rank;
    let mut dev = 0.0;
    for a in 0..rank {
        for b in 0..rank {
            for c in 0..rank {
                let target = if a == b && b == c { 1.0 } else { 0.0 };
                let d = core[(a * rank + b) * rank + c] - target;
                dev += d * d;
            }
        }
    }
    Ok(CoreConsistency {
        score: 100.0 * (1.0 - dev / rank as f64),
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn exact(truth: &CpModel) -> SparseTensor3 {
        let (ni, nj, nk) = truth.shape();
        let mut dense = Vec::new();
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    dense.push(truth.reconstruct(i, j, k).unwrap());
                }
            }
        }
        SparseTensor3::from_dense((ni, nj, nk), &dense).unwrap()
    }

    #[test]
    fn exact_model_scores_100() {
        for rank in 1..=3 {
            let truth = CpModel::random((6, 5, 4), rank, 10 + rank as u64);
            let x = exact(&truth);
            let cc = corcondia(&x, &truth).unwrap();
            assert!((cc.score - 100.0).abs() < 1e-6, "rank {rank}: {}", cc.score);
            assert!(!cc.rank_deficient);
        }
    }

    #[test]
    fn dead_column_is_flagged() {
        let mut m = CpModel::random((4, 4, 4), 2, 3);
        for i in 0..4 {
            m.users.set(i, 1, 0.0);
        }
        let x = exact(&m);
        let cc = corcondia(&x, &m).unwrap();
        assert!(cc.rank_deficient);
    }

    #[test]
    fn shape_mismatch() {
        let m = CpModel::new(Matrix::zeros(2, 1), Matrix::zeros(2, 1), Matrix::zeros(2, 1)).unwrap();
        let x = SparseTensor3::new((3, 2, 2), Vec::new()).unwrap();
        assert!(corcondia(&x, &m).is_err());
    }
}
