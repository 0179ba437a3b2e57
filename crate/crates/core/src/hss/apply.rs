//! Fast multiplication by an HSS matrix.

use rayon::prelude::*;

use super::HssMatrix;
use crate::dense::{gemm, DenseMatrix, Op};
use crate::error::{mismatch, Result};
use crate::flops::{gemm_flops, FlopCounter};

/// Default number of right-hand sides processed per tree traversal.
pub const DEFAULT_BLOCK: usize = 64;

/// `A x` or `Aᵀ x`. Same arithmetic as a one-column [`hss_matmat`].
pub fn hss_matvec(
    h: &HssMatrix,
    x: &[f64],
    transpose: bool,
    flops: Option<&FlopCounter>,
) -> Result<Vec<f64>> {
    let xm = DenseMatrix::from_col_major(x.len(), 1, x.to_vec())?;
    Ok(hss_matmat(h, &xm, transpose, flops)?.into_vec())
}

/// `A X` or `Aᵀ X` in column blocks of [`DEFAULT_BLOCK`].
pub fn hss_matmat(
    h: &HssMatrix,
    x: &DenseMatrix,
    transpose: bool,
    flops: Option<&FlopCounter>,
) -> Result<DenseMatrix> {
    hss_matmat_blocked(h, x, transpose, DEFAULT_BLOCK, flops)
}

/// Like [`hss_matmat`] with an explicit block width. Every output column is
/// computed with the same operation sequence whatever the width.
pub fn hss_matmat_blocked(
    h: &HssMatrix,
    x: &DenseMatrix,
    transpose: bool,
    block: usize,
    flops: Option<&FlopCounter>,
) -> Result<DenseMatrix> {
    let n = h.n();
    if x.rows() != n {
        return Err(mismatch(format!("{n} rows"), format!("{} rows", x.rows())));
    }
    let block = block.max(1);
    let m = x.cols();
    let starts: Vec<usize> = (0..m).step_by(block).collect();
    let counter = FlopCounter::new();
    let parts: Vec<DenseMatrix> = starts
        .par_iter()
        .map(|&c0| {
            let c1 = (c0 + block).min(m);
            apply_block(h, &x.block(0, n, c0, c1), transpose, &counter)
        })
        .collect();
    let mut out = DenseMatrix::zeros(n, m);
    for (&c0, part) in starts.iter().zip(&parts) {
        out.set_block(0, c0, part);
    }
    if let Some(f) = flops {
        f.add(counter.get());
    }
    Ok(out)
}

/// `out += op(a) · b`
fn acc(out: &mut DenseMatrix, a: &DenseMatrix, op: Op, b: &DenseMatrix, flops: &FlopCounter) {
    let inner = if op == Op::NoTrans {
        a.cols()
    } else {
        a.rows()
    };
    gemm(1.0, a, op, b, Op::NoTrans, 1.0, out);
    flops.add(gemm_flops(out.rows(), inner, out.cols()));
}

fn apply_block(
    h: &HssMatrix,
    x: &DenseMatrix,
    transpose: bool,
    flops: &FlopCounter,
) -> DenseMatrix {
    let tree = &h.tree;
    let gens = &h.nodes;
    let m = x.cols();
    let root = tree.root();
    let count = tree.nodes().len();
    let mut y = DenseMatrix::zeros(x.rows(), m);

    // Row basis (applied on the way down) and column basis (on the way up).
    let bases = |i: usize| {
        let g = &gens[i];
        if transpose {
            (&g.v, &g.u)
        } else {
            (&g.u, &g.v)
        }
    };
    // Coupling applied to the right child's carry for the left child, and
    // the one applied to the left child's carry for the right child.
    let couplings = |i: usize| {
        let g = &gens[i];
        if transpose {
            ((&g.b21, Op::Trans), (&g.b12, Op::Trans))
        } else {
            ((&g.b12, Op::NoTrans), (&g.b21, Op::NoTrans))
        }
    };

    // Upward pass.
    let mut xh: Vec<DenseMatrix> = vec![DenseMatrix::default(); count];
    for (i, node) in tree.nodes().iter().enumerate() {
        if i == root {
            break;
        }
        let (_, col_basis) = bases(i);
        let mut out = DenseMatrix::zeros(col_basis.cols(), m);
        match node.children {
            None => acc(
                &mut out,
                col_basis,
                Op::Trans,
                &x.block(node.start, node.end, 0, m),
                flops,
            ),
            Some((a, b)) => acc(
                &mut out,
                col_basis,
                Op::Trans,
                &DenseMatrix::vstack(&xh[a], &xh[b]),
                flops,
            ),
        }
        xh[i] = out;
    }

    // Downward pass, parents before children.
    let mut yh: Vec<DenseMatrix> = vec![DenseMatrix::default(); count];
    for i in (0..count).rev() {
        let node = tree.node(i);
        let (row_basis, _) = bases(i);
        match node.children {
            None => {
                let d = gens[i].d.as_ref().expect("leaf block");
                let op = if transpose { Op::Trans } else { Op::NoTrans };
                let mut out = DenseMatrix::zeros(node.len(), m);
                acc(&mut out, d, op, &x.block(node.start, node.end, 0, m), flops);
                if i != root {
                    acc(&mut out, row_basis, Op::NoTrans, &yh[i], flops);
                }
                y.set_block(node.start, 0, &out);
            }
            Some((a, b)) => {
                let ((ba, opa), (bb, opb)) = couplings(i);
                let ra = if opa == Op::NoTrans {
                    ba.rows()
                } else {
                    ba.cols()
                };
                let rb = if opb == Op::NoTrans {
                    bb.rows()
                } else {
                    bb.cols()
                };
                let mut ya = DenseMatrix::zeros(ra, m);
                let mut yb = DenseMatrix::zeros(rb, m);
                acc(&mut ya, ba, opa, &xh[b], flops);
                acc(&mut yb, bb, opb, &xh[a], flops);
                if i != root {
                    let mut spread = DenseMatrix::zeros(row_basis.rows(), m);
                    acc(&mut spread, row_basis, Op::NoTrans, &yh[i], flops);
                    add_rows(&mut ya, &spread, 0);
                    add_rows(&mut yb, &spread, ra);
                }
                yh[a] = ya;
                yh[b] = yb;
            }
        }
    }
    y
}

fn add_rows(dst: &mut DenseMatrix, src: &DenseMatrix, r0: usize) {
    for j in 0..dst.cols() {
        let s = &src.col(j)[r0..r0 + dst.rows()];
        dst.col_mut(j).iter_mut().zip(s).for_each(|(d, v)| *d += v);
    }
}
