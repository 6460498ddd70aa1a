//! Sparse 3-mode count tensors and their CP decompositions.
//!
//! A rank-`R` CP model approximates `X(i, j, k)` by
//! `Σ_r U(i, r) · T(j, r) · W(k, r)` where `U`, `T` and `W` hold one column
//! per component for the user, thread and week modes.

mod als;
mod apr;
mod autoten;
mod corcondia;

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use als::cp_als_nn_l1;
pub use apr::{cp_apr, kl_objective};
pub use autoten::{
    autoten_rank, default_max_rank, evaluate_candidate, select_rank, Family, RankCandidate,
    RankSelection, DEFAULT_CONSISTENCY_THRESHOLD,
};
pub use corcondia::{core_tensor, corcondia, CoreConsistency};

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Coordinate-format tensor of nonnegative counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseTensor3 {
    shape: (usize, usize, usize),
    entries: Vec<(usize, usize, usize, f64)>,
}

impl SparseTensor3 {
    /// Builds a tensor from an arbitrary coordinate list. Coordinates must be
    /// unique and in range; values must be finite and strictly positive.
    pub fn new(
        shape: (usize, usize, usize),
        mut entries: Vec<(usize, usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, k, v) in &entries {
            if i >= shape.0 || j >= shape.1 || k >= shape.2 {
                return Err(Error::IndexOutOfRange {
                    i,
                    j,
                    k,
                    ni: shape.0,
                    nj: shape.1,
                    nk: shape.2,
                });
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "entry ({i}, {j}, {k}) has non-positive value {v}"
                )));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1, e.2));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1, w[0].2) == (w[1].0, w[1].1, w[1].2))
        {
            return Err(Error::InvalidParameter(format!(
                "duplicate coordinate ({}, {}, {})",
                w[0].0, w[0].1, w[0].2
            )));
        }
        Ok(Self { shape, entries })
    }

    pub(crate) fn from_sorted_entries(
        shape: (usize, usize, usize),
        entries: Vec<(usize, usize, usize, f64)>,
    ) -> Self {
        Self { shape, entries }
    }

    /// Builds a sparse tensor from a dense `I×J×K` array in `(i, j, k)`
    /// row-major order, dropping zeros.
    pub fn from_dense(shape: (usize, usize, usize), values: &[f64]) -> Result<Self> {
        if values.len() != shape.0 * shape.1 * shape.2 {
            return Err(Error::ShapeMismatch(format!(
                "dense buffer of {} values for shape {:?}",
                values.len(),
                shape
            )));
        }
        let mut entries = Vec::new();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                for k in 0..shape.2 {
                    let v = values[(i * shape.1 + j) * shape.2 + k];
                    if v != 0.0 {
                        entries.push((i, j, k, v));
                    }
                }
            }
        }
        Self::new(shape, entries)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.3).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.3 * e.3).sum()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j, k), |e| (e.0, e.1, e.2))
            .map(|ix| self.entries[ix].3)
            .unwrap_or(0.0)
    }

    pub fn mode_size(&self, mode: Mode) -> usize {
        match mode {
            Mode::User => self.shape.0,
            Mode::Thread => self.shape.1,
            Mode::Week => self.shape.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    User,
    Thread,
    Week,
}

/// Factor matrices of a rank-`R` CP decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    pub rank: usize,
    /// `I × R` user factors.
    pub users: Matrix,
    /// `J × R` thread factors.
    pub threads: Matrix,
    /// `K × R` week factors.
    pub weeks: Matrix,
    /// Objective value at initialization followed by one value per sweep.
    pub objective_trace: Vec<f64>,
}

impl CpModel {
    pub fn new(users: Matrix, threads: Matrix, weeks: Matrix) -> Result<Self> {
        let rank = users.cols();
        if threads.cols() != rank || weeks.cols() != rank {
            return Err(Error::ShapeMismatch(format!(
                "factor ranks {}, {}, {} differ",
                rank,
                threads.cols(),
                weeks.cols()
            )));
        }
        Ok(Self {
            rank,
            users,
            threads,
            weeks,
            objective_trace: Vec::new(),
        })
    }

    /// Factors drawn uniformly from `[0, 1)`, users first, then threads, then
    /// weeks, each row-major.
    pub fn random(shape: (usize, usize, usize), rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize| Matrix::from_fn(rows, rank, |_, _| rng.random::<f64>());
        let users = draw(shape.0);
        let threads = draw(shape.1);
        let weeks = draw(shape.2);
        Self {
            rank,
            users,
            threads,
            weeks,
            objective_trace: Vec::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.users.rows(), self.threads.rows(), self.weeks.rows())
    }

    pub fn factor(&self, mode: Mode) -> &Matrix {
        match mode {
            Mode::User => &self.users,
            Mode::Thread => &self.threads,
            Mode::Week => &self.weeks,
        }
    }

    /// Model value at `(i, j, k)`: `Σ_r U(i,r)·T(j,r)·W(k,r)`.
    pub fn reconstruct(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        let (ni, nj, nk) = self.shape();
        if i >= ni || j >= nj || k >= nk {
            return Err(Error::IndexOutOfRange {
                i,
                j,
                k,
                ni,
                nj,
                nk,
            });
        }
        Ok(self.value_unchecked(i, j, k))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        crate::linalg::dot3(self.users.row(i), self.threads.row(j), self.weeks.row(k))
    }

    /// `(Σ U(:,r))·(Σ T(:,r))·(Σ W(:,r))` summed over components: the total
    /// mass of the reconstruction.
    pub fn total_mass(&self) -> f64 {
        (0..self.rank)
            .map(|r| column_sum(&self.users, r) * column_sum(&self.threads, r) * column_sum(&self.weeks, r))
            .sum()
    }

    /// `‖D‖²_F` computed through the factor Gram matrices.
    pub fn norm_sq(&self) -> f64 {
        let g = self
            .users
            .gram()
            .hadamard(&self.threads.gram())
            .hadamard(&self.weeks.gram());
        g.as_slice().iter().sum()
    }

    /// Product of the column norms of component `r`.
    pub fn component_energy(&self, r: usize) -> f64 {
        self.users.column_l2(r) * self.threads.column_l2(r) * self.weeks.column_l2(r)
    }

    /// Whether component `r` is identically zero in some mode.
    pub fn is_dead(&self, r: usize) -> bool {
        [&self.users, &self.threads, &self.weeks]
            .iter()
            .any(|f| (0..f.rows()).all(|i| f.get(i, r) == 0.0))
    }

    pub fn dead_components(&self) -> usize {
        (0..self.rank).filter(|&r| self.is_dead(r)).count()
    }

    /// Largest value component `r` contributes to any single cell.
    pub fn component_peak(&self, r: usize) -> f64 {
        [&self.users, &self.threads, &self.weeks]
            .iter()
            .map(|f| (0..f.rows()).map(|i| f.get(i, r)).fold(0.0, f64::max))
            .product()
    }

    /// Product of the per-mode cosines between components `a` and `b`.
    pub fn congruence(&self, a: usize, b: usize) -> f64 {
        [&self.users, &self.threads, &self.weeks]
            .iter()
            .map(|f| {
                let dot: f64 = (0..f.rows()).map(|i| f.get(i, a) * f.get(i, b)).sum();
                let n = f.column_l2(a) * f.column_l2(b);
                if n > 0.0 {
                    dot / n
                } else {
                    0.0
                }
            })
            .product()
    }

    /// Highest congruence over all component pairs; 0 for rank 1.
    pub fn max_congruence(&self) -> f64 {
        let grams = [self.users.gram(), self.threads.gram(), self.weeks.gram()];
        let cosine = |g: &Matrix, a: usize, b: usize| {
            let n = libm::sqrt(g.get(a, a)) * libm::sqrt(g.get(b, b));
            if n > 0.0 {
                g.get(a, b) / n
            } else {
                0.0
            }
        };
        let mut best = 0.0f64;
        for a in 0..self.rank {
            for b in a + 1..self.rank {
                best = best.max(grams.iter().map(|g| cosine(g, a, b)).product());
            }
        }
        best
    }

    pub fn count_nonzero(&self) -> usize {
        self.users.count_nonzero() + self.threads.count_nonzero() + self.weeks.count_nonzero()
    }

    pub fn min_entry(&self) -> f64 {
        self.users
            .min_value()
            .min(self.threads.min_value())
            .min(self.weeks.min_value())
    }

    fn check_shape(&self, x: &SparseTensor3) -> Result<()> {
        if self.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "model shape {:?} vs tensor shape {:?}",
                self.shape(),
                x.shape()
            )));
        }
        Ok(())
    }
}

fn column_sum(m: &Matrix, c: usize) -> f64 {
    (0..m.rows()).map(|r| m.get(r, c)).sum()
}

/// Matricized tensor times Khatri-Rao product for `mode`, streamed over the
/// stored entries. For the user mode this is `X₍₁₎ (W ⊙ T)`, an `I × R`
/// matrix with rows `Σ_{j,k} X(i,j,k) · (T(j,:) ∘ W(k,:))`.
pub fn mttkrp(x: &SparseTensor3, model: &CpModel, mode: Mode) -> Result<Matrix> {
    model.check_shape(x)?;
    Ok(mttkrp_unchecked(x, &model.users, &model.threads, &model.weeks, mode))
}

pub(crate) fn mttkrp_unchecked(
    x: &SparseTensor3,
    users: &Matrix,
    threads: &Matrix,
    weeks: &Matrix,
    mode: Mode,
) -> Matrix {
    let rank = users.cols();
    let (out_rows, a, b): (usize, &Matrix, &Matrix) = match mode {
        Mode::User => (users.rows(), threads, weeks),
        Mode::Thread => (threads.rows(), users, weeks),
        Mode::Week => (weeks.rows(), users, threads),
    };
    let mut out = Matrix::zeros(out_rows, rank);
    match mode {
        Mode::User => accumulate(x, &mut out, a, b, |i, j, k| (i, j, k)),
        Mode::Thread => accumulate(x, &mut out, a, b, |i, j, k| (j, i, k)),
        Mode::Week => accumulate(x, &mut out, a, b, |i, j, k| (k, i, j)),
    }
    out
}

#[inline(always)]
fn accumulate(
    x: &SparseTensor3,
    out: &mut Matrix,
    a: &Matrix,
    b: &Matrix,
    pick: impl Fn(usize, usize, usize) -> (usize, usize, usize),
) {
    for &(i, j, k, v) in x.entries() {
        let (o, ia, ib) = pick(i, j, k);
        let dst = out.row_mut(o);
        for ((d, &p), &q) in dst.iter_mut().zip(a.row(ia)).zip(b.row(ib)) {
            *d += v * p * q;
        }
    }
}

/// Solver configuration shared by the least-squares and Poisson fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// L1 penalty weight on all factor entries.
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Relative objective change below which a fit is considered converged.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_sweeps: 200,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidOptions("lambda must be finite and >= 0"));
        }
        if self.max_sweeps < 1 {
            return Err(Error::InvalidOptions("max_sweeps must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidOptions("tolerance must be > 0"));
        }
        Ok(())
    }
}

/// Whether the relative change between consecutive objective values is
/// within `tol`, or the objective has reached the numerical floor of the data.
pub(crate) fn converged(prev: f64, cur: f64, tol: f64, data_scale: f64) -> bool {
    let change = (prev - cur).abs();
    change <= tol * prev.abs() || change <= 1e-15 * data_scale || cur <= 0.0
}
