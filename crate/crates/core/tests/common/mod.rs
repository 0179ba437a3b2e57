#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tridc::{DenseMatrix, SymTridiagonal};

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn random_tridiag(n: usize, seed: u64) -> SymTridiagonal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e = (0..n.saturating_sub(1))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    SymTridiagonal::new(d, e).unwrap()
}

/// Eigenvalues of a symmetric tridiagonal from nalgebra's dense solver.
pub fn reference_values(t: &SymTridiagonal) -> Vec<f64> {
    let mut v: Vec<f64> = to_na(&t.to_dense())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest deviation of `M = U_aᵀ U_b` from a block-orthogonal matrix whose
/// blocks follow clusters of eigenvalues closer than `cluster_tol`. For a
/// simple eigenvalue the block is `±1`, i.e. a sign fix; for a cluster the
/// block must be orthogonal and everything outside the blocks must vanish.
pub fn alignment_error(
    values: &[f64],
    ua: &DenseMatrix,
    ub: &DenseMatrix,
    cluster_tol: f64,
) -> f64 {
    let n = values.len();
    let m = to_na(ua).transpose() * to_na(ub);
    let mut cluster = vec![0usize; n];
    for i in 1..n {
        cluster[i] = if values[i] - values[i - 1] <= cluster_tol {
            cluster[i - 1]
        } else {
            cluster[i - 1] + 1
        };
    }
    let mut err = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            if cluster[i] != cluster[j] {
                err = err.max(m[(i, j)].abs());
            }
        }
    }
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && cluster[end] == cluster[start] {
            end += 1;
        }
        let block = m
            .view((start, start), (end - start, end - start))
            .into_owned();
        if end - start == 1 {
            err = err.max((1.0 - block[(0, 0)].abs()).abs());
        } else {
            let g = block.transpose() * &block;
            for j in 0..g.ncols() {
                for i in 0..g.nrows() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    err = err.max((g[(i, j)] - target).abs());
                }
            }
        }
        start = end;
    }
    err
}
