//! Column-major dense matrices and the handful of kernels the solver needs.

use crate::error::{mismatch, Error, Result};

/// Transpose flag for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    NoTrans,
    Trans,
}

/// A dense real matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(mismatch(rows * cols, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; convenient for small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable access to two distinct columns at once.
    pub fn col_pair_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a, b);
        let r = self.rows;
        if a < b {
            let (lo, hi) = self.data.split_at_mut(b * r);
            (&mut lo[a * r..(a + 1) * r], &mut hi[..r])
        } else {
            let (lo, hi) = self.data.split_at_mut(a * r);
            (&mut hi[..r], &mut lo[b * r..(b + 1) * r])
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for (i, &v) in self.col(j).iter().enumerate() {
                t.data[i * self.cols + j] = v;
            }
        }
        t
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for j in 0..self.cols {
            let src = self.col(j);
            for (o, &i) in out.col_mut(j).iter_mut().zip(idx) {
                *o = src[i];
            }
        }
        out
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, idx.len());
        for (k, &j) in idx.iter().enumerate() {
            out.col_mut(k).copy_from_slice(self.col(j));
        }
        out
    }

    /// Contiguous block `[r0, r1) x [c0, c1)`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        let mut out = Self::zeros(r1 - r0, c1 - c0);
        for j in c0..c1 {
            out.col_mut(j - c0).copy_from_slice(&self.col(j)[r0..r1]);
        }
        out
    }

    /// Writes `src` into the block whose top-left corner is `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &DenseMatrix) {
        for j in 0..src.cols {
            let dst = &mut self.col_mut(c0 + j)[r0..r0 + src.rows];
            dst.copy_from_slice(src.col(j));
        }
    }

    /// Appends the columns of `other` (same row count).
    pub fn append_cols(&mut self, other: &DenseMatrix) {
        assert_eq!(self.rows, other.rows, "append_cols row mismatch");
        self.data.extend_from_slice(&other.data);
        self.cols += other.cols;
    }

    /// Stacks `top` over `bottom`.
    pub fn vstack(top: &DenseMatrix, bottom: &DenseMatrix) -> Self {
        assert_eq!(top.cols, bottom.cols, "vstack column mismatch");
        let mut out = Self::zeros(top.rows + bottom.rows, top.cols);
        out.set_block(0, 0, top);
        out.set_block(top.rows, 0, bottom);
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        product(self, Op::NoTrans, other, Op::NoTrans)
    }

    /// `selfᵀ · other`
    pub fn tr_matmul(&self, other: &DenseMatrix) -> Self {
        product(self, Op::Trans, other, Op::NoTrans)
    }

    /// `self · otherᵀ`
    pub fn matmul_tr(&self, other: &DenseMatrix) -> Self {
        product(self, Op::NoTrans, other, Op::Trans)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                    *yi += a * xj;
                }
            }
        }
        y
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }
}

/// Scaled Euclidean norm, safe against overflow for the magnitudes we see.
pub fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let ssq: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * ssq.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn op_dims(a: &DenseMatrix, op: Op) -> (usize, usize) {
    match op {
        Op::NoTrans => (a.rows, a.cols),
        Op::Trans => (a.cols, a.rows),
    }
}

fn op_strides(a: &DenseMatrix, op: Op) -> (isize, isize) {
    match op {
        Op::NoTrans => (1, a.rows as isize),
        Op::Trans => (a.rows as isize, 1),
    }
}

/// `op(a) · op(b)` into a fresh matrix.
pub fn product(a: &DenseMatrix, opa: Op, b: &DenseMatrix, opb: Op) -> DenseMatrix {
    let (m, _) = op_dims(a, opa);
    let (_, n) = op_dims(b, opb);
    let mut c = DenseMatrix::zeros(m, n);
    gemm(1.0, a, opa, b, opb, 0.0, &mut c);
    c
}

/// `c ← alpha · op(a) · op(b) + beta · c`.
///
/// Backed by `matrixmultiply`; for a fixed inner dimension the summation
/// order of each output entry does not depend on how many columns `c` has.
pub fn gemm(
    alpha: f64,
    a: &DenseMatrix,
    opa: Op,
    b: &DenseMatrix,
    opb: Op,
    beta: f64,
    c: &mut DenseMatrix,
) {
    let (m, k) = op_dims(a, opa);
    let (kb, n) = op_dims(b, opb);
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.data.fill(0.0);
        } else {
            c.scale(beta);
        }
        return;
    }
    let (rsa, csa) = op_strides(a, opa);
    let (rsb, csb) = op_strides(b, opb);
    // SAFETY: shapes and strides were validated above; all three buffers
    // are live for the duration of the call and `c` does not alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_hand_computation() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let b = DenseMatrix::from_rows(&[&[1.0, -1.0, 0.0], &[2.0, 0.5, 1.0]]);
        let c = a.matmul(&b);
        assert_eq!(
            c,
            DenseMatrix::from_rows(&[&[5.0, 0.0, 2.0], &[11.0, -1.0, 4.0], &[17.0, -2.0, 6.0]])
        );
        assert_eq!(
            a.tr_matmul(&a),
            DenseMatrix::from_rows(&[&[35.0, 44.0], &[44.0, 56.0]])
        );
        assert_eq!(
            b.matmul_tr(&b),
            DenseMatrix::from_rows(&[&[2.0, 1.5], &[1.5, 5.25]])
        );
    }

    #[test]
    fn per_column_results_do_not_depend_on_width() {
        let a = DenseMatrix::from_fn(37, 53, |i, j| ((i * 7 + j * 3) % 11) as f64 / 7.0 - 0.6);
        let x = DenseMatrix::from_fn(53, 70, |i, j| ((i * 5 + j * 13) % 17) as f64 / 9.0 - 0.9);
        let full = a.matmul(&x);
        for w in [1, 3, 8, 64] {
            let mut c0 = 0;
            while c0 < x.cols() {
                let c1 = (c0 + w).min(x.cols());
                let part = a.matmul(&x.block(0, x.rows(), c0, c1));
                for j in c0..c1 {
                    assert_eq!(part.col(j - c0), full.col(j), "width {w} column {j}");
                }
                c0 = c1;
            }
        }
    }

    #[test]
    fn zero_inner_dimension_clears_output() {
        let a = DenseMatrix::zeros(3, 0);
        let b = DenseMatrix::zeros(0, 2);
        let mut c = DenseMatrix::from_fn(3, 2, |_, _| 1.0);
        gemm(1.0, &a, Op::NoTrans, &b, Op::NoTrans, 0.0, &mut c);
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn column_pair_access() {
        let mut m = DenseMatrix::from_fn(2, 3, |i, j| (i + 10 * j) as f64);
        let (x, y) = m.col_pair_mut(2, 0);
        x[0] = -1.0;
        y[1] = -2.0;
        assert_eq!(m.get(0, 2), -1.0);
        assert_eq!(m.get(1, 0), -2.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DenseMatrix::from_col_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_col_major(1, 2, vec![1.0]).is_err());
    }
}
