//! Sparse kernels against brute-force dense computations.

use forumscope_core::linalg::Matrix;
use forumscope_core::tensor::{core_tensor, mttkrp, CpModel, Mode, SparseTensor3};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

/// Every shape up to 5×5×5 with a sparse random count tensor.
fn fixtures() -> Vec<(SparseTensor3, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    for ni in 1..=5 {
        for nj in 1..=5 {
            for nk in 1..=5 {
                let dense: Vec<f64> = (0..ni * nj * nk)
                    .map(|_| if rng.random::<f64>() < 0.4 { rng.random_range(1..6) as f64 } else { 0.0 })
                    .collect();
                out.push((SparseTensor3::from_dense((ni, nj, nk), &dense).unwrap(), dense));
            }
        }
    }
    out
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c))
}

/// Column-wise Khatri-Rao product with the first argument varying slowest.
fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows() * b.nrows(), a.ncols(), |row, r| {
        a[(row / b.nrows(), r)] * b[(row % b.nrows(), r)]
    })
}

fn cell(dense: &[f64], shape: (usize, usize, usize), i: usize, j: usize, k: usize) -> f64 {
    dense[(i * shape.1 + j) * shape.2 + k]
}

#[test]
fn reconstruct_matches_outer_product_sum() {
    for (seed, (x, _)) in fixtures().into_iter().enumerate() {
        let shape = x.shape();
        for rank in 1..=3 {
            let model = CpModel::random(shape, rank, seed as u64 * 7 + rank as u64);
            let (u, t, w) = (to_na(&model.users), to_na(&model.threads), to_na(&model.weeks));
            for i in 0..shape.0 {
                for j in 0..shape.1 {
                    for k in 0..shape.2 {
                        let mut want = 0.0;
                        for r in 0..rank {
                            want += u[(i, r)] * t[(j, r)] * w[(k, r)];
                        }
                        let got = model.reconstruct(i, j, k).unwrap();
                        assert!((got - want).abs() <= TOL, "{shape:?} r{rank} ({i},{j},{k})");
                    }
                }
            }
        }
    }
}

#[test]
fn mttkrp_matches_unfolding_times_khatri_rao() {
    for (seed, (x, dense)) in fixtures().into_iter().enumerate() {
        let s = x.shape();
        for rank in 1..=3 {
            let model = CpModel::random(s, rank, 1000 + seed as u64 * 3 + rank as u64);
            let (u, t, w) = (to_na(&model.users), to_na(&model.threads), to_na(&model.weeks));
            // Unfoldings with columns ordered to match the Khatri-Rao rows.
            let x1 = DMatrix::from_fn(s.0, s.1 * s.2, |i, c| cell(&dense, s, i, c / s.2, c % s.2));
            let x2 = DMatrix::from_fn(s.1, s.0 * s.2, |j, c| cell(&dense, s, c / s.2, j, c % s.2));
            let x3 = DMatrix::from_fn(s.2, s.0 * s.1, |k, c| cell(&dense, s, c / s.1, c % s.1, k));
            let cases = [
                (Mode::User, x1 * khatri_rao(&t, &w)),
                (Mode::Thread, x2 * khatri_rao(&u, &w)),
                (Mode::Week, x3 * khatri_rao(&u, &t)),
            ];
            for (mode, want) in cases {
                let got = to_na(&mttkrp(&x, &model, mode).unwrap());
                assert!((got - want).amax() <= TOL, "{s:?} r{rank} {mode:?}");
            }
        }
    }
}

#[test]
fn core_matches_kronecker_least_squares() {
    let mut checked = 0;
    for (seed, (x, dense)) in fixtures().into_iter().enumerate() {
        let s = x.shape();
        let max_rank = s.0.min(s.1).min(s.2).min(3);
        for rank in 1..=max_rank {
            let model = CpModel::random(s, rank, 5000 + seed as u64 * 5 + rank as u64);
            let (u, t, w) = (to_na(&model.users), to_na(&model.threads), to_na(&model.weeks));
            // Design matrix over cells (i, j, k) and core entries (a, b, c).
            let r3 = rank * rank * rank;
            let z = DMatrix::from_fn(s.0 * s.1 * s.2, r3, |row, col| {
                let (i, j, k) = (row / (s.1 * s.2), (row / s.2) % s.1, row % s.2);
                let (a, b, c) = (col / (rank * rank), (col / rank) % rank, col % rank);
                u[(i, a)] * t[(j, b)] * w[(k, c)]
            });
            let rhs = DMatrix::from_column_slice(dense.len(), 1, &dense);
            let qr = z.qr();
            let want = qr.r().solve_upper_triangular(&(qr.q().transpose() * rhs)).unwrap();
            let (got, deficient) = core_tensor(&x, &model).unwrap();
            assert!(!deficient);
            let err = got.iter().zip(want.iter()).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
            let scale = want.amax().max(1.0);
            assert!(err <= TOL * scale, "{s:?} r{rank}: {err}");
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn model_from_factors_validates_rank() {
    let u = Matrix::zeros(2, 2);
    let t = Matrix::zeros(3, 1);
    let w = Matrix::zeros(2, 2);
    assert!(CpModel::new(u, t, w).is_err());
}
