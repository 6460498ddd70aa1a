//! Nonnegative CP with an L1 penalty, fitted by column-wise block coordinate
//! descent (HALS).
//!
//! Objective: `½‖X − D‖²_F + λ (Σ|U| + Σ|T| + Σ|W|)` with `U, T, W ≥ 0`.
//! Each column update is the exact minimizer of the objective in that column,
//! so the objective never increases. For a user-mode column `r`:
//!
//! ```text
//! U(i,r) ← max(0, (M(i,r) − Σ_{s≠r} U(i,s) G(s,r) − λ) / G(r,r))
//! ```
//!
//! where `M` is the MTTKRP of `X` and `G = (TᵀT) ∘ (WᵀW)`. The soft threshold
//! produces exact zeros, which is what cluster extraction filters on.

use alloc::vec;
use alloc::vec::Vec;

use super::{converged, mttkrp_unchecked, CpModel, Mode, SolverOptions, SparseTensor3};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Tensors with at most this many cells get an exact residual computed cell by
/// cell; larger ones use the Gram-matrix expansion.
const DENSE_RESIDUAL_CELLS: usize = 1 << 16;

/// Fits a nonnegative, L1-regularized rank-`rank` CP model.
pub fn cp_als_nn_l1(x: &SparseTensor3, rank: usize, opts: &SolverOptions) -> Result<CpModel> {
    opts.validate()?;
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be >= 1".into()));
    }
    if x.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let (ni, nj, nk) = x.shape();
    if rank > ni.min(nj).min(nk) {
        log::warn!("rank {rank} exceeds smallest tensor dimension {}", ni.min(nj).min(nk));
    }

    let mut model = CpModel::random(x.shape(), rank, opts.seed);
    match_mass(&mut model, x.sum());
    // Dead components stay zero under the update rule, so the fit runs on the
    // live columns only; `live[c]` is the original index of working column `c`.
    let mut live: Vec<usize> = (0..rank).collect();

    let x_norm_sq = x.norm_sq();
    let mut obj = objective(x, &model, opts.lambda, x_norm_sq);
    if !obj.is_finite() {
        return Err(Error::SolverFailure(0));
    }
    model.objective_trace.push(obj);

    let mut gt = model.threads.gram();
    let mut gw = model.weeks.gram();
    for sweep in 1..=opts.max_sweeps {
        let m = mttkrp_unchecked(x, &model.users, &model.threads, &model.weeks, Mode::User);
        update_factor(&mut model.users, &m, &gt.hadamard(&gw), opts.lambda);
        let gu = model.users.gram();

        let m = mttkrp_unchecked(x, &model.users, &model.threads, &model.weeks, Mode::Thread);
        update_factor(&mut model.threads, &m, &gu.hadamard(&gw), opts.lambda);
        gt = model.threads.gram();

        let m = mttkrp_unchecked(x, &model.users, &model.threads, &model.weeks, Mode::Week);
        update_factor(&mut model.weeks, &m, &gu.hadamard(&gt), opts.lambda);

        rebalance(&mut model, opts.lambda > 0.0);
        if model.dead_components() > 0 && model.dead_components() < model.rank {
            let keep: Vec<usize> = (0..model.rank).filter(|&r| !model.is_dead(r)).collect();
            live = keep.iter().map(|&c| live[c]).collect();
            model = select_components(model, &keep);
        }
        gt = model.threads.gram();
        gw = model.weeks.gram();

        let next = objective(x, &model, opts.lambda, x_norm_sq);
        if !next.is_finite() {
            return Err(Error::SolverFailure(sweep));
        }
        model.objective_trace.push(next);
        let done = converged(obj, next, opts.tolerance, x_norm_sq);
        obj = next;
        if done {
            break;
        }
    }
    Ok(expand_components(model, &live, rank))
}

fn select_components(model: CpModel, keep: &[usize]) -> CpModel {
    let pick = |m: &Matrix| Matrix::from_fn(m.rows(), keep.len(), |i, c| m.get(i, keep[c]));
    CpModel {
        rank: keep.len(),
        users: pick(&model.users),
        threads: pick(&model.threads),
        weeks: pick(&model.weeks),
        objective_trace: model.objective_trace,
    }
}

fn expand_components(model: CpModel, live: &[usize], rank: usize) -> CpModel {
    if live.len() == rank {
        return model;
    }
    let spread = |m: &Matrix| {
        let mut out = Matrix::zeros(m.rows(), rank);
        for i in 0..m.rows() {
            for (c, &orig) in live.iter().enumerate() {
                out.set(i, orig, m.get(i, c));
            }
        }
        out
    };
    CpModel {
        rank,
        users: spread(&model.users),
        threads: spread(&model.threads),
        weeks: spread(&model.weeks),
        objective_trace: model.objective_trace,
    }
}

/// Scales all factors by a common constant so the initial reconstruction
/// carries the same total mass as the data.
fn match_mass(model: &mut CpModel, data_mass: f64) {
    let mass = model.total_mass();
    if mass <= 0.0 || data_mass <= 0.0 {
        return;
    }
    let s = libm::cbrt(data_mass / mass);
    for f in [&mut model.users, &mut model.threads, &mut model.weeks] {
        for v in f.as_mut_slice() {
            *v *= s;
        }
    }
}

/// Exact nonnegative coordinate minimization of every column of `factor`,
/// processed row by row (rows are independent given `g`).
fn update_factor(factor: &mut Matrix, m: &Matrix, g: &Matrix, lambda: f64) {
    let rank = factor.cols();
    let mut cross = vec![0.0; rank];
    for i in 0..factor.rows() {
        let mrow = m.row(i);
        let row = factor.row_mut(i);
        if row.iter().all(|&v| v == 0.0) && mrow.iter().all(|&v| v <= lambda) {
            continue;
        }
        cross.iter_mut().for_each(|c| *c = 0.0);
        for (s, &us) in row.iter().enumerate() {
            if us != 0.0 {
                let gs = g.row(s);
                for (c, &gv) in cross.iter_mut().zip(gs) {
                    *c += us * gv;
                }
            }
        }
        for r in 0..rank {
            let grr = g.get(r, r);
            let old = row[r];
            let new = if grr > 0.0 {
                let others = cross[r] - old * grr;
                let v = (mrow[r] - others - lambda) / grr;
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            } else if lambda > 0.0 {
                0.0
            } else {
                old
            };
            let delta = new - old;
            if delta != 0.0 {
                row[r] = new;
                let gr = g.row(r);
                for (c, &gv) in cross.iter_mut().zip(gr) {
                    *c += delta * gv;
                }
            }
        }
    }
}

/// Rescales each component so its three column norms are equal (L1 norms when
/// the penalty is active, L2 otherwise). The reconstruction is unchanged and,
/// by the AM-GM inequality, the L1 penalty can only decrease. Components that
/// vanish in any mode are zeroed in all modes.
fn rebalance(model: &mut CpModel, l1: bool) {
    for r in 0..model.rank {
        let norms = [&model.users, &model.threads, &model.weeks]
            .map(|f| if l1 { f.column_l1(r) } else { f.column_l2(r) });
        if norms.iter().any(|&n| n == 0.0) {
            model.users.scale_column(r, 0.0);
            model.threads.scale_column(r, 0.0);
            model.weeks.scale_column(r, 0.0);
            continue;
        }
        let g = libm::cbrt(norms[0] * norms[1] * norms[2]);
        model.users.scale_column(r, g / norms[0]);
        model.threads.scale_column(r, g / norms[1]);
        model.weeks.scale_column(r, g / norms[2]);
    }
}

pub(crate) fn objective(x: &SparseTensor3, model: &CpModel, lambda: f64, x_norm_sq: f64) -> f64 {
    let penalty = if lambda > 0.0 {
        lambda * (model.users.l1() + model.threads.l1() + model.weeks.l1())
    } else {
        0.0
    };
    0.5 * residual_sq(x, model, x_norm_sq) + penalty
}

/// `‖X − D‖²_F`.
pub(crate) fn residual_sq(x: &SparseTensor3, model: &CpModel, x_norm_sq: f64) -> f64 {
    let (ni, nj, nk) = x.shape();
    if ni * nj * nk <= DENSE_RESIDUAL_CELLS {
        let mut entries = x.entries().iter().peekable();
        let mut acc = 0.0;
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let xv = match entries.peek() {
                        Some(&&(a, b, c, v)) if (a, b, c) == (i, j, k) => {
                            entries.next();
                            v
                        }
                        _ => 0.0,
                    };
                    let d = xv - model.value_unchecked(i, j, k);
                    acc += d * d;
                }
            }
        }
        acc
    } else {
        let inner: f64 = x
            .entries()
            .iter()
            .map(|&(i, j, k, v)| v * model.value_unchecked(i, j, k))
            .sum();
        (x_norm_sq - 2.0 * inner + model.norm_sq()).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(shape: (usize, usize, usize), rank: usize, seed: u64) -> (SparseTensor3, CpModel) {
        let truth = CpModel::random(shape, rank, seed);
        let mut dense = Vec::new();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                for k in 0..shape.2 {
                    dense.push(truth.reconstruct(i, j, k).unwrap());
                }
            }
        }
        (SparseTensor3::from_dense(shape, &dense).unwrap(), truth)
    }

    #[test]
    fn noiseless_rank_two_recovered() {
        let (x, _) = planted((6, 5, 4), 2, 3);
        let opts = SolverOptions {
            lambda: 0.0,
            max_sweeps: 5000,
            tolerance: 1e-12,
            seed: 9,
        };
        let model = cp_als_nn_l1(&x, 2, &opts).unwrap();
        let rel = libm::sqrt(residual_sq(&x, &model, x.norm_sq()) / x.norm_sq());
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn trace_is_monotone_and_factors_nonnegative() {
        let (x, _) = planted((5, 6, 4), 3, 1);
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            let opts = SolverOptions { lambda, seed: 4, ..Default::default() };
            let model = cp_als_nn_l1(&x, 3, &opts).unwrap();
            assert!(model.min_entry() >= 0.0);
            for w in model.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-8), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn empty_tensor_rejected() {
        let x = SparseTensor3::new((2, 2, 2), Vec::new()).unwrap();
        assert_eq!(cp_als_nn_l1(&x, 1, &SolverOptions::default()), Err(Error::EmptyTensor));
    }

    #[test]
    fn oversized_rank_still_fits() {
        let (x, _) = planted((2, 3, 3), 1, 5);
        let model = cp_als_nn_l1(&x, 4, &SolverOptions::default()).unwrap();
        assert_eq!(model.rank, 4);
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, _) = planted((4, 4, 4), 2, 8);
        let opts = SolverOptions { seed: 21, ..Default::default() };
        let a = cp_als_nn_l1(&x, 2, &opts).unwrap();
        let b = cp_als_nn_l1(&x, 2, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_and_expanded_residuals_agree() {
        let (x, _) = planted((4, 3, 5), 2, 2);
        let model = CpModel::random((4, 3, 5), 2, 77);
        let dense = residual_sq(&x, &model, x.norm_sq());
        let inner: f64 = x
            .entries()
            .iter()
            .map(|&(i, j, k, v)| v * model.value_unchecked(i, j, k))
            .sum();
        let expanded = x.norm_sq() - 2.0 * inner + model.norm_sq();
        assert!((dense - expanded).abs() <= 1e-9 * x.norm_sq());
    }
}
