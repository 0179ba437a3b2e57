//! Divide and conquer: recursive tearing, rank-one merges and the two
//! eigenvector update paths.

use serde::{Deserialize, Serialize};

use crate::dense::{gemm, DenseMatrix, Op};
use crate::error::{Error, Result};
use crate::flops::{gemm_flops, FlopCounter};
use crate::hss::{compress_randomized, hss_matmat, ClusterTree, HssDiagnostics, HssOptions};
use crate::jacobi::jacobi_eigh;
use crate::matgen::SymTridiagonal;
use crate::secular::{
    lowner_reweight, normalize_rankone, solve_secular, CauchyEigvecs, DeflationOutcome, ENTRY_FLOPS,
};

/// Eigenvalues ascending; column `i` of `vectors` belongs to `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathOverride {
    #[default]
    Auto,
    ForceDense,
    ForceHss,
}

/// Eigenvector update actually used at a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathChoice {
    Dense,
    Hss,
    /// Everything deflated; no product was needed.
    Deflated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcOptions {
    pub base_size: usize,
    /// Smallest secular system size that takes the HSS path under `auto`.
    pub switch_threshold: usize,
    pub hss_tol: f64,
    pub leaf_size: usize,
    pub r0: usize,
    pub p: usize,
    pub rank_increment: usize,
    pub path: PathOverride,
    pub tol_factor: f64,
    pub seed: u64,
}

impl Default for DcOptions {
    fn default() -> Self {
        let h = HssOptions::default();
        Self {
            base_size: 32,
            switch_threshold: 1024,
            hss_tol: h.tol,
            leaf_size: h.leaf_size,
            r0: h.r0,
            p: h.p,
            rank_increment: h.rank_increment,
            path: PathOverride::Auto,
            tol_factor: 8.0,
            seed: 0,
        }
    }
}

impl DcOptions {
    pub fn validate(&self) -> Result<()> {
        if self.base_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "base_size must be at least 2, got {}",
                self.base_size
            )));
        }
        if self.leaf_size == 0 {
            return Err(Error::InvalidParameter(
                "leaf_size must be at least 1".into(),
            ));
        }
        if self.switch_threshold < 2 * self.leaf_size {
            return Err(Error::InvalidParameter(format!(
                "switch_threshold {} is below twice the leaf size {}",
                self.switch_threshold, self.leaf_size
            )));
        }
        if !(self.tol_factor > 0.0 && self.tol_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tol_factor must be positive, got {}",
                self.tol_factor
            )));
        }
        if !(self.hss_tol >= 0.0 && self.hss_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hss tolerance must be nonnegative, got {}",
                self.hss_tol
            )));
        }
        if self.r0 == 0 || self.rank_increment == 0 {
            return Err(Error::InvalidParameter(
                "r0 and rank_increment must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn hss_options(&self, seed: u64) -> HssOptions {
        HssOptions {
            leaf_size: self.leaf_size,
            r0: self.r0,
            p: self.p,
            rank_increment: self.rank_increment,
            tol: self.hss_tol,
            seed,
        }
    }

    fn choose(&self, k: usize) -> PathChoice {
        match (k, self.path) {
            (0, _) => PathChoice::Deflated,
            (_, PathOverride::ForceDense) => PathChoice::Dense,
            (_, PathOverride::ForceHss) => PathChoice::Hss,
            (k, PathOverride::Auto) if k >= self.switch_threshold => PathChoice::Hss,
            _ => PathChoice::Dense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStats {
    /// Distance from the root merge (which is level 0).
    pub level: usize,
    /// First row of the merged block within the full matrix.
    pub offset: usize,
    pub n_merge: usize,
    pub k: usize,
    pub deflation_fraction: f64,
    pub path: PathChoice,
    pub hss_rank: Option<usize>,
    pub hss: Option<HssDiagnostics>,
    pub flops_update: u64,
    pub flops_secular: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Merge records in completion order (children before parents).
    pub merges: Vec<MergeStats>,
    pub flops_base: u64,
    /// `flops_base` plus secular and update flops of every merge.
    pub flops_total: u64,
    /// Deflated columns over merged columns, summed over all merges.
    pub deflation_fraction: f64,
    pub max_hss_rank: Option<usize>,
}

impl SolveStats {
    fn from_parts(merges: Vec<MergeStats>, flops_base: u64) -> Self {
        let flops_total = flops_base
            + merges
                .iter()
                .map(|m| m.flops_update + m.flops_secular)
                .sum::<u64>();
        let merged: usize = merges.iter().map(|m| m.n_merge).sum();
        let deflated: usize = merges.iter().map(|m| m.n_merge - m.k).sum();
        let deflation_fraction = if merged == 0 {
            0.0
        } else {
            deflated as f64 / merged as f64
        };
        let max_hss_rank = merges.iter().filter_map(|m| m.hss_rank).max();
        Self {
            merges,
            flops_base,
            flops_total,
            deflation_fraction,
            max_hss_rank,
        }
    }

    /// The root merge, if any merge happened.
    pub fn top_merge(&self) -> Option<&MergeStats> {
        self.merges.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyMetrics {
    /// `max(‖I - U Uᵀ‖_max, ‖I - Uᵀ U‖_max)`
    pub orthogonality: f64,
    /// `max_i ‖T u_i - λ_i u_i‖₂ / ‖T‖_F`
    pub residual: f64,
    pub ascending: bool,
}

/// Tears `t` after its first `k` rows: `t = diag(t1, t2) + b v vᵀ` where `v`
/// has ones at positions `k - 1` and `k`.
pub fn split(t: &SymTridiagonal, k: usize) -> Result<(SymTridiagonal, SymTridiagonal, f64)> {
    let n = t.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "split point {k} outside 1..{n}"
        )));
    }
    let b = t.offdiag()[k - 1];
    let mut d1 = t.diag()[..k].to_vec();
    let mut d2 = t.diag()[k..].to_vec();
    d1[k - 1] -= b;
    d2[0] -= b;
    let t1 = SymTridiagonal::new(d1, t.offdiag()[..k - 1].to_vec())?;
    let t2 = SymTridiagonal::new(d2, t.offdiag()[k..].to_vec())?;
    Ok((t1, t2, b))
}

/// Dense solve of a small block: one exact rotation for `n <= 2`, cyclic
/// Jacobi otherwise.
pub fn base_solve(t: &SymTridiagonal, flops: Option<&FlopCounter>) -> EigenDecomposition {
    if t.n() == 1 {
        return EigenDecomposition {
            values: t.diag().to_vec(),
            vectors: DenseMatrix::identity(1),
        };
    }
    // For n = 2 the first Jacobi rotation is the closed-form solution.
    let (values, vectors) = jacobi_eigh(&t.to_dense(), flops);
    EigenDecomposition { values, vectors }
}

/// `diag(q1, q2)` with the deflation rotations applied to its columns, plus
/// which columns have support in the upper and in the lower row block.
struct RotatedBasis {
    w: DenseMatrix,
    upper: Vec<bool>,
    lower: Vec<bool>,
}

fn rotated_basis(
    q1: &DenseMatrix,
    q2: &DenseMatrix,
    outcome: &DeflationOutcome,
    flops: &FlopCounter,
) -> RotatedBasis {
    let (n1, n2) = (q1.rows(), q2.rows());
    let n = n1 + n2;
    let mut w = DenseMatrix::zeros(n, n);
    w.set_block(0, 0, q1);
    w.set_block(n1, n1, q2);
    let mut upper: Vec<bool> = (0..n).map(|j| j < n1).collect();
    let mut lower: Vec<bool> = (0..n).map(|j| j >= n1).collect();
    for r in &outcome.rotations {
        let (cp, cq) = w.col_pair_mut(r.p, r.q);
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = r.c * a + r.s * b;
            *y = -r.s * a + r.c * b;
        }
        upper[r.p] |= upper[r.q];
        upper[r.q] = upper[r.p];
        lower[r.p] |= lower[r.q];
        lower[r.q] = lower[r.p];
    }
    flops.add(6 * (n * outcome.rotations.len()) as u64);
    RotatedBasis { w, upper, lower }
}

/// Copies the deflated columns of the rotated basis behind the first `k`
/// output columns.
fn copy_deflated(out: &mut DenseMatrix, basis: &RotatedBasis, outcome: &DeflationOutcome) {
    let k = outcome.k;
    for (j, &c) in outcome.perm[k..].iter().enumerate() {
        out.col_mut(k + j).copy_from_slice(basis.w.col(c));
    }
}

/// Dense eigenvector update. Columns of the rotated `diag(q1, q2)` are
/// grouped by whether they touch the upper rows, the lower rows or both, so
/// that the non-deflated block costs one product per row block. Output
/// columns: the `k` updated vectors in root order, then the deflated ones.
pub fn update_dense(
    q1: &DenseMatrix,
    q2: &DenseMatrix,
    outcome: &DeflationOutcome,
    qhat: Option<&CauchyEigvecs>,
    flops: &FlopCounter,
) -> Result<DenseMatrix> {
    let (n1, n2) = (q1.rows(), q2.rows());
    let n = n1 + n2;
    if outcome.perm.len() != n {
        return Err(crate::error::mismatch(n, outcome.perm.len()));
    }
    let k = outcome.k;
    let basis = rotated_basis(q1, q2, outcome, flops);
    let mut out = DenseMatrix::zeros(n, n);
    if k > 0 {
        let qhat = qhat.ok_or_else(|| {
            Error::Precondition("eigenvectors of the secular system are missing".into())
        })?;
        if qhat.k() != k {
            return Err(crate::error::mismatch(k, qhat.k()));
        }
        let nd = &outcome.perm[..k];
        let qd = qhat.to_dense();
        flops.add(ENTRY_FLOPS * (k * k) as u64);
        for (rows, flags) in [(0..n1, &basis.upper), (n1..n, &basis.lower)] {
            let sel: Vec<usize> = (0..k).filter(|&i| flags[nd[i]]).collect();
            let a = DenseMatrix::from_fn(rows.len(), sel.len(), |r, c| {
                basis.w.get(rows.start + r, nd[sel[c]])
            });
            let b = qd.select_rows(&sel);
            let mut part = DenseMatrix::zeros(rows.len(), k);
            gemm(1.0, &a, Op::NoTrans, &b, Op::NoTrans, 0.0, &mut part);
            flops.add(gemm_flops(rows.len(), sel.len(), k));
            out.set_block(rows.start, 0, &part);
        }
    }
    copy_deflated(&mut out, &basis, outcome);
    Ok(out)
}

/// HSS eigenvector update. `Q̂` is compressed in its natural secular order
/// and applied from the right to the rotated non-deflated columns `X` as
/// `(Q̂ᵀ Xᵀ)ᵀ`. Output column layout matches [`update_dense`].
pub fn update_hss(
    q1: &DenseMatrix,
    q2: &DenseMatrix,
    outcome: &DeflationOutcome,
    qhat: &CauchyEigvecs,
    hss: &HssOptions,
    flops: &FlopCounter,
) -> Result<(DenseMatrix, HssDiagnostics)> {
    let n = q1.rows() + q2.rows();
    if outcome.perm.len() != n {
        return Err(crate::error::mismatch(n, outcome.perm.len()));
    }
    let k = outcome.k;
    if qhat.k() != k || k == 0 {
        return Err(crate::error::mismatch(k, qhat.k()));
    }
    let basis = rotated_basis(q1, q2, outcome, flops);
    let nd = &outcome.perm[..k];
    let xt = DenseMatrix::from_fn(k, n, |i, r| basis.w.get(r, nd[i]));
    let tree = ClusterTree::new(k, hss.leaf_size)?;
    let h = compress_randomized(qhat, &tree, hss)?;
    flops.add(h.diagnostics().construction_flops);
    let yt = hss_matmat(&h, &xt, true, Some(flops))?;
    drop(xt);
    let mut out = DenseMatrix::zeros(n, n);
    for r in 0..n {
        for i in 0..k {
            out.set(r, i, yt.get(i, r));
        }
    }
    copy_deflated(&mut out, &basis, outcome);
    Ok((out, h.diagnostics().clone()))
}

/// Combines the eigendecompositions of the two torn halves. `level` and
/// `offset` only label the returned statistics; `seed` drives the HSS
/// sampling.
pub fn merge(
    left: &EigenDecomposition,
    right: &EigenDecomposition,
    b: f64,
    opts: &DcOptions,
    level: usize,
    offset: usize,
    seed: u64,
) -> Result<(EigenDecomposition, MergeStats)> {
    let (n1, n2) = (left.values.len(), right.values.len());
    let n = n1 + n2;
    if left.vectors.rows() != n1 || right.vectors.rows() != n2 {
        return Err(crate::error::mismatch(
            "square eigenvector blocks",
            "mismatched block",
        ));
    }
    let update = FlopCounter::new();
    let secular = FlopCounter::new();
    let d_raw: Vec<f64> = left.values.iter().chain(&right.values).copied().collect();

    let mut stats = MergeStats {
        level,
        offset,
        n_merge: n,
        k: 0,
        deflation_fraction: 1.0,
        path: PathChoice::Deflated,
        hss_rank: None,
        hss: None,
        flops_update: 0,
        flops_secular: 0,
    };

    if b == 0.0 {
        let mut vectors = DenseMatrix::zeros(n, n);
        vectors.set_block(0, 0, &left.vectors);
        vectors.set_block(n1, n1, &right.vectors);
        return Ok((sorted(d_raw, &vectors), stats));
    }

    let z_raw: Vec<f64> = (0..n1)
        .map(|j| left.vectors.get(n1 - 1, j))
        .chain((0..n2).map(|j| right.vectors.get(0, j)))
        .collect();
    let outcome = normalize_rankone(&d_raw, &z_raw, b, opts.tol_factor)?;
    let k = outcome.k;
    let path = opts.choose(k);

    let (mut values, cauchy) = if k > 0 {
        let roots = solve_secular(&outcome.system, Some(&secular))?;
        let zhat = lowner_reweight(&outcome.system, &roots, Some(&secular))?;
        let cauchy = CauchyEigvecs::new(&outcome.system, &zhat, &roots, Some(&update));
        (
            roots.iter().map(|r| r.lambda).collect::<Vec<f64>>(),
            Some(cauchy),
        )
    } else {
        (Vec::new(), None)
    };
    values.extend_from_slice(&outcome.deflated_values);
    let values: Vec<f64> = values.into_iter().map(|v| outcome.unmap(v)).collect();

    let vectors = match (path, &cauchy) {
        (PathChoice::Hss, Some(c)) => {
            let (v, diag) = update_hss(
                &left.vectors,
                &right.vectors,
                &outcome,
                c,
                &opts.hss_options(seed),
                &update,
            )?;
            stats.hss_rank = Some(diag.hss_rank);
            stats.hss = Some(diag);
            v
        }
        _ => update_dense(
            &left.vectors,
            &right.vectors,
            &outcome,
            cauchy.as_ref(),
            &update,
        )?,
    };

    stats.k = k;
    stats.deflation_fraction = outcome.deflation_fraction();
    stats.path = path;
    stats.flops_update = update.get();
    stats.flops_secular = secular.get();
    Ok((sorted(values, &vectors), stats))
}

/// Stable ascending sort of `values` with the matching column permutation.
fn sorted(values: Vec<f64>, vectors: &DenseMatrix) -> EigenDecomposition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    EigenDecomposition {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: vectors.select_cols(&order),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Sampling seed of the merge covering `offset..offset + n`.
pub fn merge_seed(seed: u64, offset: usize, n: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((offset as u64) << 32) ^ n as u64))
}

struct Partial {
    eig: EigenDecomposition,
    merges: Vec<MergeStats>,
    flops_base: u64,
}

fn recurse(t: &SymTridiagonal, opts: &DcOptions, level: usize, offset: usize) -> Result<Partial> {
    let n = t.n();
    if n <= opts.base_size {
        let f = FlopCounter::new();
        let eig = base_solve(t, Some(&f));
        return Ok(Partial {
            eig,
            merges: Vec::new(),
            flops_base: f.get(),
        });
    }
    let k = n.div_ceil(2);
    let (t1, t2, b) = split(t, k)?;
    let (l, r) = rayon::join(
        || recurse(&t1, opts, level + 1, offset),
        || recurse(&t2, opts, level + 1, offset + k),
    );
    let (l, r) = (l?, r?);
    let (eig, stats) = merge(
        &l.eig,
        &r.eig,
        b,
        opts,
        level,
        offset,
        merge_seed(opts.seed, offset, n),
    )?;
    let mut merges = l.merges;
    merges.extend(r.merges);
    merges.push(stats);
    Ok(Partial {
        eig,
        merges,
        flops_base: l.flops_base + r.flops_base,
    })
}

/// Full eigendecomposition of `t`.
pub fn solve(t: &SymTridiagonal, opts: &DcOptions) -> Result<(EigenDecomposition, SolveStats)> {
    opts.validate()?;
    let p = recurse(t, opts, 0, 0)?;
    Ok((p.eig, SolveStats::from_parts(p.merges, p.flops_base)))
}

/// Solves the two halves of `t` once and runs the root merge on both update
/// paths. Returns the dense and the HSS merge statistics.
pub fn top_merge_comparison(
    t: &SymTridiagonal,
    opts: &DcOptions,
) -> Result<(MergeStats, MergeStats)> {
    opts.validate()?;
    let n = t.n();
    if n < 2 {
        return Err(Error::InvalidDimension("a merge needs n >= 2".into()));
    }
    let k = n.div_ceil(2);
    let (t1, t2, b) = split(t, k)?;
    let (l, r) = rayon::join(|| recurse(&t1, opts, 1, 0), || recurse(&t2, opts, 1, k));
    let (l, r) = (l?, r?);
    let seed = merge_seed(opts.seed, 0, n);
    let dense = DcOptions {
        path: PathOverride::ForceDense,
        ..*opts
    };
    let hss = DcOptions {
        path: PathOverride::ForceHss,
        ..*opts
    };
    let (_, sd) = merge(&l.eig, &r.eig, b, &dense, 0, 0, seed)?;
    let (_, sh) = merge(&l.eig, &r.eig, b, &hss, 0, 0, seed)?;
    Ok((sd, sh))
}

/// Orthogonality, relative residual and ordering of a computed
/// decomposition of `t`.
pub fn verify(t: &SymTridiagonal, e: &EigenDecomposition) -> Result<VerifyMetrics> {
    let n = t.n();
    let u = &e.vectors;
    if e.values.len() != n || u.rows() != n || u.cols() != n {
        return Err(crate::error::mismatch(
            format!("{n} values and {n}x{n} vectors"),
            format!(
                "{} values and {}x{} vectors",
                e.values.len(),
                u.rows(),
                u.cols()
            ),
        ));
    }
    // Both Gram matrices: U Uᵀ is the reported measure, Uᵀ U catches a
    // rescaled column at full size.
    let mut orthogonality = 0.0f64;
    for g in [u.matmul_tr(u), u.tr_matmul(u)] {
        for j in 0..n {
            for (i, &v) in g.col(j).iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                orthogonality = orthogonality.max((target - v).abs());
            }
        }
    }
    let fro = t.frobenius_norm();
    let mut residual = 0.0f64;
    for (j, &lam) in e.values.iter().enumerate() {
        let col = u.col(j);
        let tu = t.matvec(col);
        let r = tu
            .iter()
            .zip(col)
            .map(|(a, b)| (a - lam * b).powi(2))
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
    }
    let residual = if fro > 0.0 { residual / fro } else { residual };
    let ascending = e.values.windows(2).all(|w| w[0] <= w[1]);
    Ok(VerifyMetrics {
        orthogonality,
        residual,
        ascending,
    })
}
