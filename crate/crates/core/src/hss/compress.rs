//! Randomized HSS construction with adaptive sample growth.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::id::{interpolative_decomposition_floor, RowId};
use super::tree::ClusterTree;
use super::{summarize, HssDiagnostics, HssMatrix, HssNode, HssOptions};
use crate::dense::{gemm, DenseMatrix, Op};
use crate::error::{Error, Result};
use crate::flops::{gemm_flops, FlopCounter};
use crate::secular::{CauchyEigvecs, Side, ENTRY_FLOPS};

/// Name of the generator behind the Gaussian test matrices.
pub const RNG_NAME: &str = "chacha20/standard-normal";

/// Access to a square matrix through block products and entry evaluation.
pub trait MatrixSource: Sync {
    fn dim(&self) -> usize;

    /// `A · x`, or `Aᵀ · x` when `transpose` is set.
    fn multiply(
        &self,
        x: &DenseMatrix,
        transpose: bool,
        flops: Option<&FlopCounter>,
    ) -> Result<DenseMatrix>;

    /// The submatrix `A(rows, cols)`.
    fn entries(&self, rows: &[usize], cols: &[usize], flops: Option<&FlopCounter>) -> DenseMatrix;
}

impl MatrixSource for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn multiply(
        &self,
        x: &DenseMatrix,
        transpose: bool,
        flops: Option<&FlopCounter>,
    ) -> Result<DenseMatrix> {
        if x.rows() != self.rows() {
            return Err(crate::error::mismatch(
                format!("{} rows", self.rows()),
                format!("{} rows", x.rows()),
            ));
        }
        let op = if transpose { Op::Trans } else { Op::NoTrans };
        let mut out = DenseMatrix::zeros(self.cols(), x.cols());
        gemm(1.0, self, op, x, Op::NoTrans, 0.0, &mut out);
        if let Some(f) = flops {
            f.add(gemm_flops(self.rows(), self.cols(), x.cols()));
        }
        Ok(out)
    }

    fn entries(&self, rows: &[usize], cols: &[usize], _flops: Option<&FlopCounter>) -> DenseMatrix {
        DenseMatrix::from_fn(rows.len(), cols.len(), |a, b| self.get(rows[a], cols[b]))
    }
}

impl MatrixSource for CauchyEigvecs {
    fn dim(&self) -> usize {
        self.k()
    }

    fn multiply(
        &self,
        x: &DenseMatrix,
        transpose: bool,
        flops: Option<&FlopCounter>,
    ) -> Result<DenseMatrix> {
        let side = if transpose {
            Side::TransposeLeft
        } else {
            Side::Left
        };
        self.apply(x, side, flops)
    }

    fn entries(&self, rows: &[usize], cols: &[usize], flops: Option<&FlopCounter>) -> DenseMatrix {
        if let Some(f) = flops {
            f.add(ENTRY_FLOPS * (rows.len() * cols.len()) as u64);
        }
        CauchyEigvecs::entries(self, rows, cols)
    }
}

/// Compressed sample data a committed node hands to its parent.
#[derive(Debug, Clone, Default)]
struct Carry {
    /// Residual samples on the selected rows.
    phi: DenseMatrix,
    /// Transposed residual samples on the selected columns.
    theta: DenseMatrix,
    /// `V̂ᵀ Ω₁` restricted to the node.
    yhat: DenseMatrix,
    /// `Ûᵀ Ω₂` restricted to the node.
    zhat: DenseMatrix,
}

/// Local positions chosen by the two IDs of a node.
#[derive(Debug, Clone, Default)]
struct Selection {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

/// Samples drawn so far and the per-node state of committed nodes.
struct SamplingState {
    omega1: DenseMatrix,
    omega2: DenseMatrix,
    y: DenseMatrix,
    z: DenseMatrix,
    rng1: ChaCha20Rng,
    rng2: ChaCha20Rng,
    carries: Vec<Carry>,
    selections: Vec<Selection>,
    committed: Vec<bool>,
}

impl SamplingState {
    fn new(n: usize, nodes: usize, seed: u64) -> Self {
        let mut rng1 = ChaCha20Rng::seed_from_u64(seed);
        rng1.set_stream(1);
        let mut rng2 = ChaCha20Rng::seed_from_u64(seed);
        rng2.set_stream(2);
        Self {
            omega1: DenseMatrix::zeros(n, 0),
            omega2: DenseMatrix::zeros(n, 0),
            y: DenseMatrix::zeros(n, 0),
            z: DenseMatrix::zeros(n, 0),
            rng1,
            rng2,
            carries: vec![Carry::default(); nodes],
            selections: vec![Selection::default(); nodes],
            committed: vec![false; nodes],
        }
    }

    fn samples(&self) -> usize {
        self.omega1.cols()
    }

    /// Absolute ID thresholds for row and column residuals: `tol` times the
    /// RMS row norm of the samples. Sample entries carry rounding noise of
    /// order `eps` times that scale (more when a heavy diagonal cancels),
    /// which a purely node-relative rule would keep as rank.
    fn floors(&self, tol: f64) -> (f64, f64) {
        let n = self.y.rows().max(1) as f64;
        (
            tol * self.y.frobenius_norm() / n.sqrt(),
            tol * self.z.frobenius_norm() / n.sqrt(),
        )
    }

    /// Draws `extra` new columns for both test matrices and samples them.
    /// Columns are drawn sequentially, so column `j` does not depend on how
    /// growth was chunked.
    fn grow(&mut self, src: &dyn MatrixSource, extra: usize, flops: &FlopCounter) -> Result<()> {
        let n = self.omega1.rows();
        let w1 = gaussian(n, extra, &mut self.rng1);
        let w2 = gaussian(n, extra, &mut self.rng2);
        let y = src.multiply(&w1, false, Some(flops))?;
        let z = src.multiply(&w2, true, Some(flops))?;
        self.omega1.append_cols(&w1);
        self.omega2.append_cols(&w2);
        self.y.append_cols(&y);
        self.z.append_cols(&z);
        Ok(())
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(StandardNormal.sample(rng));
    }
    DenseMatrix::from_col_major(rows, cols, data).expect("finite gaussian samples")
}

fn cols_of(m: &DenseMatrix, cols: &Range<usize>) -> DenseMatrix {
    m.block(0, m.rows(), cols.start, cols.end)
}

/// `a - b · c` with the requested transpose on `b`.
fn minus_product(
    a: &DenseMatrix,
    b: &DenseMatrix,
    opb: Op,
    c: &DenseMatrix,
    flops: &FlopCounter,
) -> DenseMatrix {
    let mut out = a.clone();
    gemm(-1.0, b, opb, c, Op::NoTrans, 1.0, &mut out);
    let inner = if opb == Op::NoTrans {
        b.cols()
    } else {
        b.rows()
    };
    flops.add(gemm_flops(out.rows(), inner, out.cols()));
    out
}

fn tr_product(a: &DenseMatrix, b: &DenseMatrix, flops: &FlopCounter) -> DenseMatrix {
    flops.add(gemm_flops(a.cols(), a.rows(), b.cols()));
    a.tr_matmul(b)
}

struct Ctx<'a> {
    src: &'a dyn MatrixSource,
    tree: &'a ClusterTree,
    opts: &'a HssOptions,
    flops: &'a FlopCounter,
}

impl Ctx<'_> {
    /// Residual samples `(Φ, Θ)` of node `i` on sample columns `cols`.
    /// Children (or the leaf block) must already be committed in `gens`.
    fn residuals(
        &self,
        i: usize,
        gens: &[HssNode],
        st: &SamplingState,
        cols: &Range<usize>,
    ) -> (DenseMatrix, DenseMatrix) {
        let node = self.tree.node(i);
        let g = &gens[i];
        match node.children {
            None => {
                let d = g.d.as_ref().expect("leaf block");
                let (r0, r1) = (node.start, node.end);
                let y = st.y.block(r0, r1, cols.start, cols.end);
                let z = st.z.block(r0, r1, cols.start, cols.end);
                let w1 = st.omega1.block(r0, r1, cols.start, cols.end);
                let w2 = st.omega2.block(r0, r1, cols.start, cols.end);
                let phi = minus_product(&y, d, Op::NoTrans, &w1, self.flops);
                let theta = minus_product(&z, d, Op::Trans, &w2, self.flops);
                (phi, theta)
            }
            Some((a, b)) => {
                let (ca, cb) = (&st.carries[a], &st.carries[b]);
                let phi = DenseMatrix::vstack(
                    &minus_product(
                        &cols_of(&ca.phi, cols),
                        &g.b12,
                        Op::NoTrans,
                        &cols_of(&cb.yhat, cols),
                        self.flops,
                    ),
                    &minus_product(
                        &cols_of(&cb.phi, cols),
                        &g.b21,
                        Op::NoTrans,
                        &cols_of(&ca.yhat, cols),
                        self.flops,
                    ),
                );
                let theta = DenseMatrix::vstack(
                    &minus_product(
                        &cols_of(&ca.theta, cols),
                        &g.b21,
                        Op::Trans,
                        &cols_of(&cb.zhat, cols),
                        self.flops,
                    ),
                    &minus_product(
                        &cols_of(&cb.theta, cols),
                        &g.b12,
                        Op::Trans,
                        &cols_of(&ca.zhat, cols),
                        self.flops,
                    ),
                );
                (phi, theta)
            }
        }
    }

    /// Projected test matrices `(V̂ᵀΩ₁, ÛᵀΩ₂)` of node `i` on `cols`.
    fn carries_out(
        &self,
        i: usize,
        g: &HssNode,
        st: &SamplingState,
        cols: &Range<usize>,
    ) -> (DenseMatrix, DenseMatrix) {
        let node = self.tree.node(i);
        match node.children {
            None => {
                let w1 = st.omega1.block(node.start, node.end, cols.start, cols.end);
                let w2 = st.omega2.block(node.start, node.end, cols.start, cols.end);
                (
                    tr_product(&g.v, &w1, self.flops),
                    tr_product(&g.u, &w2, self.flops),
                )
            }
            Some((a, b)) => {
                let (ca, cb) = (&st.carries[a], &st.carries[b]);
                let ys = DenseMatrix::vstack(&cols_of(&ca.yhat, cols), &cols_of(&cb.yhat, cols));
                let zs = DenseMatrix::vstack(&cols_of(&ca.zhat, cols), &cols_of(&cb.zhat, cols));
                (
                    tr_product(&g.v, &ys, self.flops),
                    tr_product(&g.u, &zs, self.flops),
                )
            }
        }
    }

    /// Global row and column indices backing the stacked residual rows.
    fn candidates(&self, i: usize, gens: &[HssNode]) -> (Vec<usize>, Vec<usize>) {
        let node = self.tree.node(i);
        match node.children {
            None => (
                (node.start..node.end).collect(),
                (node.start..node.end).collect(),
            ),
            Some((a, b)) => {
                let rows = gens[a]
                    .row_skel
                    .iter()
                    .chain(&gens[b].row_skel)
                    .copied()
                    .collect();
                let cols = gens[a]
                    .col_skel
                    .iter()
                    .chain(&gens[b].col_skel)
                    .copied()
                    .collect();
                (rows, cols)
            }
        }
    }

    /// Leaf block or coupling blocks; these only depend on committed children.
    fn fixed_generators(&self, i: usize, gens: &[HssNode]) -> HssNode {
        let node = self.tree.node(i);
        let mut g = HssNode::default();
        match node.children {
            None => {
                let t: Vec<usize> = (node.start..node.end).collect();
                g.d = Some(self.src.entries(&t, &t, Some(self.flops)));
            }
            Some((a, b)) => {
                g.b12 = self
                    .src
                    .entries(&gens[a].row_skel, &gens[b].col_skel, Some(self.flops));
                g.b21 = self
                    .src
                    .entries(&gens[b].row_skel, &gens[a].col_skel, Some(self.flops));
            }
        }
        g
    }

    /// Runs both IDs of node `i` on all current samples.
    fn compress_node(
        &self,
        i: usize,
        mut g: HssNode,
        gens: &[HssNode],
        st: &SamplingState,
    ) -> (HssNode, Carry, Selection) {
        let all = 0..st.samples();
        let (phi, theta) = self.residuals(i, gens, st, &all);
        let (row_floor, col_floor) = st.floors(self.opts.tol);
        let row_id: RowId = interpolative_decomposition_floor(
            &phi,
            self.opts.tol,
            row_floor,
            usize::MAX,
            Some(self.flops),
        );
        let col_id: RowId = interpolative_decomposition_floor(
            &theta,
            self.opts.tol,
            col_floor,
            usize::MAX,
            Some(self.flops),
        );
        let (rows, cols) = self.candidates(i, gens);
        g.row_skel = row_id.selected.iter().map(|&k| rows[k]).collect();
        g.col_skel = col_id.selected.iter().map(|&k| cols[k]).collect();
        g.u = row_id.interp;
        g.v = col_id.interp;
        let (yhat, zhat) = self.carries_out(i, &g, st, &all);
        let carry = Carry {
            phi: phi.select_rows(&row_id.selected),
            theta: theta.select_rows(&col_id.selected),
            yhat,
            zhat,
        };
        let sel = Selection {
            rows: row_id.selected,
            cols: col_id.selected,
        };
        (g, carry, sel)
    }

    /// Appends the sample columns `cols` to the carry of committed node `i`,
    /// keeping its bases fixed.
    fn extend_node(
        &self,
        i: usize,
        gens: &[HssNode],
        st: &SamplingState,
        cols: &Range<usize>,
    ) -> Carry {
        let (phi, theta) = self.residuals(i, gens, st, cols);
        let sel = &st.selections[i];
        let (yhat, zhat) = self.carries_out(i, &gens[i], st, cols);
        let mut carry = st.carries[i].clone();
        carry.phi.append_cols(&phi.select_rows(&sel.rows));
        carry.theta.append_cols(&theta.select_rows(&sel.cols));
        carry.yhat.append_cols(&yhat);
        carry.zhat.append_cols(&zhat);
        carry
    }
}

/// Builds an HSS approximation of `src` on `tree`.
///
/// Nodes are compressed level by level from the leaves up. Whenever a node
/// at the current level needs more than `samples - p` basis vectors, the
/// sample count grows by `rank_increment`, committed nodes below absorb the
/// new columns and the level is redone. Once the sample count reaches `n`
/// the sampling is exact and over-rank nodes are accepted and flagged.
pub fn compress_randomized(
    src: &dyn MatrixSource,
    tree: &ClusterTree,
    opts: &HssOptions,
) -> Result<HssMatrix> {
    let n = tree.n();
    if src.dim() != n {
        return Err(crate::error::mismatch(
            format!("source of dimension {n}"),
            format!("{}", src.dim()),
        ));
    }
    if opts.r0 == 0 {
        return Err(Error::InvalidParameter("r0 must be at least 1".into()));
    }
    if opts.rank_increment == 0 {
        return Err(Error::InvalidParameter(
            "rank_increment must be at least 1".into(),
        ));
    }
    if !(opts.tol.is_finite() && opts.tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {} must be finite and nonnegative",
            opts.tol
        )));
    }
    let flops = FlopCounter::new();
    let ctx = Ctx {
        src,
        tree,
        opts,
        flops: &flops,
    };
    let count = tree.nodes().len();
    let mut gens: Vec<HssNode> = vec![HssNode::default(); count];
    let mut st = SamplingState::new(n, count, opts.seed);
    let mut growth_steps = 0usize;
    let mut fallback_nodes = Vec::new();
    let root = tree.root();

    if count > 1 {
        st.grow(src, (opts.r0 + opts.p).min(n), &flops)?;
    }

    for level in (1..=tree.depth()).rev() {
        let ids = tree.level_nodes(level);
        let fixed: Vec<HssNode> = ids
            .par_iter()
            .map(|&i| ctx.fixed_generators(i, &gens))
            .collect();
        for (&i, g) in ids.iter().zip(fixed) {
            gens[i] = g;
        }
        loop {
            let done: Vec<(HssNode, Carry, Selection)> = ids
                .par_iter()
                .map(|&i| ctx.compress_node(i, gens[i].clone(), &gens, &st))
                .collect();
            let s = st.samples();
            let budget = s.saturating_sub(opts.p);
            let over: Vec<usize> = ids
                .iter()
                .zip(&done)
                .filter(|(_, (g, _, _))| g.row_skel.len().max(g.col_skel.len()) > budget)
                .map(|(&i, _)| i)
                .collect();
            if over.is_empty() || s >= n {
                fallback_nodes.extend(over);
                for (&i, (g, carry, sel)) in ids.iter().zip(done) {
                    gens[i] = g;
                    st.carries[i] = carry;
                    st.selections[i] = sel;
                    st.committed[i] = true;
                }
                break;
            }
            let extra = opts.rank_increment.min(n - s);
            st.grow(src, extra, &flops)?;
            growth_steps += 1;
            let new_cols = s..s + extra;
            // Postorder: children are extended before their parents.
            for i in 0..count {
                if st.committed[i] {
                    st.carries[i] = ctx.extend_node(i, &gens, &st, &new_cols);
                }
            }
        }
    }
    gens[root] = ctx.fixed_generators(root, &gens);

    let (hss_rank, level_ranks, memory_entries) = summarize(tree, &gens);
    let diagnostics = HssDiagnostics {
        hss_rank,
        level_ranks,
        memory_entries,
        construction_flops: flops.get(),
        samples: st.samples(),
        growth_steps,
        fallback_nodes,
        rng: RNG_NAME.to_string(),
    };
    Ok(HssMatrix {
        tree: tree.clone(),
        nodes: gens,
        diagnostics,
    })
}
