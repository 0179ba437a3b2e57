//! Hierarchically semiseparable matrices.
//!
//! A matrix is stored on a postordered [`ClusterTree`]: every leaf keeps its
//! dense diagonal block `D`, every non-root node keeps interpolative bases
//! `U`, `V` (tall for leaves, small transfer matrices acting on the stacked
//! children bases otherwise), and every parent keeps the two coupling
//! blocks `B` between its children. The off-diagonal block between siblings
//! `a` and `b` is `Û_a B_ab V̂_bᵀ`.

mod apply;
mod compress;
mod id;
mod tree;

use serde::{Deserialize, Serialize};

pub use apply::{hss_matmat, hss_matmat_blocked, hss_matvec, DEFAULT_BLOCK};
pub use compress::{compress_randomized, MatrixSource, RNG_NAME};
pub use id::{interpolative_decomposition, interpolative_decomposition_floor, RowId};
pub use tree::{ClusterNode, ClusterTree};

use crate::dense::DenseMatrix;

/// Construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HssOptions {
    pub leaf_size: usize,
    /// Initial rank guess.
    pub r0: usize,
    /// Oversampling.
    pub p: usize,
    /// Samples added whenever a node's rank reaches the sample budget.
    pub rank_increment: usize,
    /// Relative truncation tolerance for every interpolative decomposition.
    pub tol: f64,
    pub seed: u64,
}

impl Default for HssOptions {
    fn default() -> Self {
        Self {
            leaf_size: 128,
            r0: 32,
            p: 10,
            rank_increment: 32,
            tol: 1e-14,
            seed: 0,
        }
    }
}

/// Generators of one tree node. Unused fields stay empty (`0 x 0`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HssNode {
    /// Dense diagonal block (leaves only).
    pub d: Option<DenseMatrix>,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    /// Global row indices selected by the row ID.
    pub row_skel: Vec<usize>,
    /// Global column indices selected by the column ID.
    pub col_skel: Vec<usize>,
    /// Coupling from the right child's columns into the left child's rows.
    pub b12: DenseMatrix,
    /// Coupling from the left child's columns into the right child's rows.
    pub b21: DenseMatrix,
}

impl Default for DenseMatrix {
    fn default() -> Self {
        DenseMatrix::zeros(0, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HssDiagnostics {
    pub hss_rank: usize,
    /// Largest skeleton size per tree level, root level first.
    pub level_ranks: Vec<usize>,
    /// Number of stored generator entries.
    pub memory_entries: usize,
    pub construction_flops: u64,
    pub samples: usize,
    pub growth_steps: usize,
    /// Nodes whose rank reached the sample budget after the sample count hit
    /// the matrix dimension; their sampling was exact.
    pub fallback_nodes: Vec<usize>,
    pub rng: String,
}

#[derive(Debug, Clone)]
pub struct HssMatrix {
    pub(crate) tree: ClusterTree,
    pub(crate) nodes: Vec<HssNode>,
    pub(crate) diagnostics: HssDiagnostics,
}

impl HssMatrix {
    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn nodes(&self) -> &[HssNode] {
        &self.nodes
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn hss_rank(&self) -> usize {
        self.diagnostics.hss_rank
    }

    pub fn diagnostics(&self) -> &HssDiagnostics {
        &self.diagnostics
    }

    /// Expands the representation into a dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let tree = &self.tree;
        let n = tree.n();
        let mut out = DenseMatrix::zeros(n, n);
        // Full bases Û_i, V̂_i with |t_i| rows.
        let mut ub: Vec<DenseMatrix> = vec![DenseMatrix::default(); tree.nodes().len()];
        let mut vb: Vec<DenseMatrix> = vec![DenseMatrix::default(); tree.nodes().len()];
        for (i, node) in tree.nodes().iter().enumerate() {
            let g = &self.nodes[i];
            match node.children {
                None => {
                    out.set_block(
                        node.start,
                        node.start,
                        g.d.as_ref().expect("leaf without D"),
                    );
                    if i != tree.root() {
                        ub[i] = g.u.clone();
                        vb[i] = g.v.clone();
                    }
                }
                Some((a, b)) => {
                    let (na, nb) = (tree.node(a), tree.node(b));
                    let upper = ub[a].matmul(&g.b12).matmul_tr(&vb[b]);
                    out.set_block(na.start, nb.start, &upper);
                    let lower = ub[b].matmul(&g.b21).matmul_tr(&vb[a]);
                    out.set_block(nb.start, na.start, &lower);
                    if i != tree.root() {
                        ub[i] = block_diag(&ub[a], &ub[b]).matmul(&g.u);
                        vb[i] = block_diag(&vb[a], &vb[b]).matmul(&g.v);
                    }
                }
            }
        }
        out
    }
}

/// Dense expansion of `h`; see [`HssMatrix::to_dense`].
pub fn hss_to_dense(h: &HssMatrix) -> DenseMatrix {
    h.to_dense()
}

pub fn hss_diagnostics(h: &HssMatrix) -> HssDiagnostics {
    h.diagnostics.clone()
}

fn block_diag(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows() + b.rows(), a.cols() + b.cols());
    out.set_block(0, 0, a);
    out.set_block(a.rows(), a.cols(), b);
    out
}

pub(crate) fn summarize(tree: &ClusterTree, nodes: &[HssNode]) -> (usize, Vec<usize>, usize) {
    let mut level_ranks = vec![0usize; tree.depth() + 1];
    let mut memory = 0usize;
    for (i, g) in nodes.iter().enumerate() {
        let r = g.row_skel.len().max(g.col_skel.len());
        let lvl = tree.node(i).level;
        level_ranks[lvl] = level_ranks[lvl].max(r);
        let size = |m: &DenseMatrix| m.rows() * m.cols();
        memory +=
            g.d.as_ref().map_or(0, size) + size(&g.u) + size(&g.v) + size(&g.b12) + size(&g.b21);
    }
    let hss_rank = level_ranks.iter().copied().max().unwrap_or(0);
    (hss_rank, level_ranks, memory)
}
