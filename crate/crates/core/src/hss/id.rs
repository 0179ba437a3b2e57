//! Row interpolative decomposition via column-pivoted Householder QR.

use crate::dense::DenseMatrix;
use crate::flops::FlopCounter;

/// Row ID `M ≈ interp · M(selected, :)`.
#[derive(Debug, Clone)]
pub struct RowId {
    pub interp: DenseMatrix,
    pub selected: Vec<usize>,
}

impl RowId {
    #[inline]
    pub fn rank(&self) -> usize {
        self.selected.len()
    }
}

/// Computes a row ID of `m`. Pivoted QR runs on `mᵀ` and stops at the first
/// step whose diagonal satisfies `|R_kk| <= tol * |R_11|`, or at `max_rank`.
/// Rows of `interp` at `selected` form an exact identity.
pub fn interpolative_decomposition(
    m: &DenseMatrix,
    tol: f64,
    max_rank: usize,
    flops: Option<&FlopCounter>,
) -> RowId {
    interpolative_decomposition_floor(m, tol, 0.0, max_rank, flops)
}

/// Like [`interpolative_decomposition`], but also stops once `|R_kk|` drops
/// to `floor`, an absolute threshold.
pub fn interpolative_decomposition_floor(
    m: &DenseMatrix,
    tol: f64,
    floor: f64,
    max_rank: usize,
    flops: Option<&FlopCounter>,
) -> RowId {
    let nr = m.rows();
    let s = m.cols();
    // Work on mᵀ: its columns are the rows of m.
    let mut a = m.transpose();
    let mut piv: Vec<usize> = (0..nr).collect();
    let kmax = nr.min(s).min(max_rank);
    let mut r11 = 0.0;
    let mut rank = 0;
    let mut work = 0u64;

    for k in 0..kmax {
        let (best, best_sq) = (k..nr)
            .map(|j| (j, a.col(j)[k..].iter().map(|x| x * x).sum::<f64>()))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        work += 2 * ((nr - k) * (s - k)) as u64;
        if best != k {
            let (x, y) = a.col_pair_mut(k, best);
            x.swap_with_slice(y);
            piv.swap(k, best);
        }
        let diag = best_sq.sqrt();
        if k == 0 {
            r11 = diag;
        }
        if diag == 0.0 || diag <= tol * r11 || diag <= floor {
            break;
        }
        // Householder reflector for a[k.., k].
        let mut v: Vec<f64> = a.col(k)[k..].to_vec();
        let alpha = -v[0].signum() * diag;
        let alpha = if alpha == 0.0 { -diag } else { alpha };
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        {
            let col = a.col_mut(k);
            col[k] = alpha;
            col[k + 1..].iter_mut().for_each(|x| *x = 0.0);
        }
        if vnorm_sq > 0.0 {
            let beta = 2.0 / vnorm_sq;
            for j in k + 1..nr {
                let col = &mut a.col_mut(j)[k..];
                let w: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
                let f = beta * w;
                col.iter_mut().zip(&v).for_each(|(c, p)| *c -= f * p);
            }
            work += 4 * ((nr - k) * (s - k)) as u64;
        }
        rank = k + 1;
    }

    // T = R11⁻¹ R12 by back substitution, column by column.
    let rest = nr - rank;
    let mut t = DenseMatrix::zeros(rank, rest);
    for l in 0..rest {
        let rhs = a.col(rank + l);
        let out = t.col_mut(l);
        for i in (0..rank).rev() {
            let mut acc = rhs[i];
            for j in i + 1..rank {
                acc -= a.get(i, j) * out[j];
            }
            out[i] = acc / a.get(i, i);
        }
    }
    work += (rank * rank * rest) as u64;

    let mut interp = DenseMatrix::zeros(nr, rank);
    for (j, &row) in piv[..rank].iter().enumerate() {
        interp.set(row, j, 1.0);
    }
    for (l, &row) in piv[rank..].iter().enumerate() {
        for j in 0..rank {
            interp.set(row, j, t.get(j, l));
        }
    }
    if let Some(f) = flops {
        f.add(work);
    }
    RowId {
        interp,
        selected: piv[..rank].to_vec(),
    }
}
