//! Poisson CP fitting by multiplicative updates on the KL divergence.

use alloc::vec;
use alloc::vec::Vec;

use super::{converged, CpModel, Mode, SolverOptions, SparseTensor3};
use crate::linalg::{dot, Matrix};
use crate::{Error, Result};

/// Smallest model value used when dividing by the reconstruction.
const MIN_MODEL_VALUE: f64 = 1e-300;

/// Generalized KL divergence `Σ (D − X + X ln(X/D))` over all cells.
pub fn kl_objective(x: &SparseTensor3, model: &CpModel) -> f64 {
    let mut acc = model.total_mass();
    for &(i, j, k, v) in x.entries() {
        let d = model.value_unchecked(i, j, k).max(MIN_MODEL_VALUE);
        acc += v * libm::log(v / d) - v;
    }
    acc
}

/// Fits a rank-`rank` Poisson CP model. Each sweep applies one multiplicative
/// update per mode, then rescales thread and week columns to unit sum with
/// the scale absorbed into the user factors.
pub fn cp_apr(x: &SparseTensor3, rank: usize, opts: &SolverOptions) -> Result<CpModel> {
    opts.validate()?;
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be >= 1".into()));
    }
    let scale = x.sum();
    if x.is_empty() || scale <= 0.0 {
        return Err(Error::DegeneratePoissonFit);
    }
    let mut model = CpModel::random(x.shape(), rank, opts.seed);
    let mass = model.total_mass();
    if mass > 0.0 {
        let ratio = scale / mass;
        model.users.as_mut_slice().iter_mut().for_each(|v| *v *= ratio);
    }
    normalize(&mut model);

    let mut obj = kl_objective(x, &model);
    if !obj.is_finite() {
        return Err(Error::SolverFailure(0));
    }
    model.objective_trace.push(obj);
    let mut scratch = vec![0.0; rank];
    let mut previous_users = model.users.clone();
    for sweep in 1..=opts.max_sweeps {
        // The user step sees the model left by the previous sweep, so it also
        // yields that model's objective.
        let mass = model.total_mass();
        if sweep > 1 {
            previous_users.as_mut_slice().copy_from_slice(model.users.as_slice());
        }
        let fit = multiplicative_step(x, &mut model, Mode::User, &mut scratch);
        if sweep > 1 {
            let next = mass + fit;
            if !next.is_finite() {
                return Err(Error::SolverFailure(sweep - 1));
            }
            model.objective_trace.push(next);
            let done = converged(obj, next, opts.tolerance, scale);
            obj = next;
            if done {
                core::mem::swap(&mut model.users, &mut previous_users);
                return Ok(model);
            }
        }
        multiplicative_step(x, &mut model, Mode::Thread, &mut scratch);
        multiplicative_step(x, &mut model, Mode::Week, &mut scratch);
        normalize(&mut model);
    }
    if opts.max_sweeps > 0 {
        let next = kl_objective(x, &model);
        if !next.is_finite() {
            return Err(Error::SolverFailure(opts.max_sweeps));
        }
        model.objective_trace.push(next);
    }
    Ok(model)
}

/// One multiplicative update of the factor for `mode`:
/// `A ← A ∘ Φ / (1 (B ∘ C)-column sums)` with `Φ = (X / D) · (B ⊙ C)`.
/// The model value `D` of each nonzero is formed from the same Khatri-Rao row
/// that is accumulated into `Φ`. Returns `Σ (X ln(X/D) − X)` over the
/// nonzeros at the model before the update.
fn multiplicative_step(x: &SparseTensor3, model: &mut CpModel, mode: Mode, kr: &mut [f64]) -> f64 {
    let rank = model.rank;
    let (target, a, b) = match mode {
        Mode::User => (&model.users, &model.threads, &model.weeks),
        Mode::Thread => (&model.threads, &model.users, &model.weeks),
        Mode::Week => (&model.weeks, &model.users, &model.threads),
    };
    let denom: Vec<f64> = (0..rank).map(|r| column_sum(a, r) * column_sum(b, r)).collect();
    let mut phi = Matrix::zeros(target.rows(), rank);
    let mut fit = 0.0;
    for &(i, j, k, v) in x.entries() {
        let (o, ia, ib) = match mode {
            Mode::User => (i, j, k),
            Mode::Thread => (j, i, k),
            Mode::Week => (k, i, j),
        };
        let (ra, rb) = (&a.row(ia)[..rank], &b.row(ib)[..rank]);
        let kr = &mut kr[..rank];
        for r in 0..rank {
            kr[r] = ra[r] * rb[r];
        }
        let d = dot(kr, target.row(o)).max(MIN_MODEL_VALUE);
        let ratio = v / d;
        fit += v * libm::log(ratio) - v;
        let dst = &mut phi.row_mut(o)[..rank];
        for r in 0..rank {
            dst[r] += ratio * kr[r];
        }
    }
    let target = match mode {
        Mode::User => &mut model.users,
        Mode::Thread => &mut model.threads,
        Mode::Week => &mut model.weeks,
    };
    for row in 0..target.rows() {
        let ph = phi.row(row);
        for (r, t) in target.row_mut(row).iter_mut().enumerate() {
            *t = if denom[r] > 0.0 { *t * ph[r] / denom[r] } else { 0.0 };
        }
    }
    fit
}

fn column_sum(m: &Matrix, c: usize) -> f64 {
    (0..m.rows()).map(|r| m.get(r, c)).sum()
}

fn normalize(model: &mut CpModel) {
    for r in 0..model.rank {
        let st = column_sum(&model.threads, r);
        let sw = column_sum(&model.weeks, r);
        if st > 0.0 && sw > 0.0 {
            model.threads.scale_column(r, 1.0 / st);
            model.weeks.scale_column(r, 1.0 / sw);
            model.users.scale_column(r, st * sw);
        } else {
            model.users.scale_column(r, 0.0);
            model.threads.scale_column(r, 0.0);
            model.weeks.scale_column(r, 0.0);
        }
    }
}
