//! Cyclic Jacobi eigensolver for small dense symmetric matrices.
//!
//! Used for the divide-and-conquer base case and as a brute-force reference
//! in tests. Each sweep visits every `(p, q)` pair once in row order.

use crate::dense::DenseMatrix;
use crate::flops::FlopCounter;

const MAX_SWEEPS: usize = 60;

/// Eigen-decomposition of a symmetric matrix. Only the values of `a` are
/// read; the upper and lower triangle must agree. Eigenvalues come back
/// ascending with matching eigenvector columns.
pub fn jacobi_eigh(a: &DenseMatrix, flops: Option<&FlopCounter>) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "jacobi_eigh needs a square matrix");
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let fro = m.frobenius_norm();
    let target = (n as f64) * f64::EPSILON * fro;
    let mut work = 0u64;

    for _ in 0..MAX_SWEEPS {
        if off_norm(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                let (app, aqq) = (m.get(p, p), m.get(q, q));
                rotate(&mut m, &mut v, p, q, c, s);
                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                work += 18 * n as u64;
            }
        }
    }
    if let Some(f) = flops {
        f.add(work);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    (values, v.select_cols(&order))
}

fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    {
        let (cp, cq) = m.col_pair_mut(p, q);
        for r in 0..n {
            let (x, y) = (cp[r], cq[r]);
            cp[r] = c * x - s * y;
            cq[r] = s * x + c * y;
        }
    }
    // Mirror the updated columns into rows p and q.
    for r in 0..n {
        let (x, y) = (m.get(r, p), m.get(r, q));
        m.set(p, r, x);
        m.set(q, r, y);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    let (vp, vq) = v.col_pair_mut(p, q);
    for r in 0..n {
        let (x, y) = (vp[r], vq[r]);
        vp[r] = c * x - s * y;
        vq[r] = s * x + c * y;
    }
}

fn off_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for j in 0..n {
        for (i, x) in m.col(j).iter().enumerate() {
            if i != j {
                s += x * x;
            }
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DenseMatrix, values: &[f64], v: &DenseMatrix) -> f64 {
        let av = a.matmul(v);
        let mut worst = 0.0f64;
        for (j, &lam) in values.iter().enumerate() {
            for i in 0..a.rows() {
                worst = worst.max((av.get(i, j) - lam * v.get(i, j)).abs());
            }
        }
        worst
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (vals, v) = jacobi_eigh(&a, None);
        assert!((vals[0] - 1.0).abs() < 1e-15 && (vals[1] - 3.0).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        assert!((v.get(0, 0).abs() - h).abs() < 1e-15);
        assert!((v.get(0, 0) + v.get(1, 0)).abs() < 1e-15);
        assert!((v.get(0, 1) - v.get(1, 1)).abs() < 1e-15);
    }

    #[test]
    fn random_symmetric_is_diagonalized() {
        let n = 40;
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = DenseMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let x = next();
                a.set(i, j, x);
                a.set(j, i, x);
            }
        }
        let flops = FlopCounter::new();
        let (vals, v) = jacobi_eigh(&a, Some(&flops));
        assert!(flops.get() > 0);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!(residual(&a, &vals, &v) < 1e-13);
        let orth = v.tr_matmul(&v).sub(&DenseMatrix::identity(n)).max_abs();
        assert!(orth < 1e-14, "{orth}");
    }
}
