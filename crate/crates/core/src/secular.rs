//! The rank-one merge problem `D + rho z zᵀ`: deflation, secular roots,
//! Löwner reweighting and the Cauchy-like eigenvector matrix.
//!
//! Roots are stored relative to their nearest pole, `lambda = d[pole] + mu`,
//! so that every difference `d_k - lambda` can be formed as
//! `(d_k - d[pole]) - mu` without cancellation.

use crate::dense::{gemm, norm2, DenseMatrix, Op};
use crate::error::{Error, Result};
use crate::flops::FlopCounter;

const EPS: f64 = f64::EPSILON;
const MAX_ITER: usize = 100;
const PANEL: usize = 64;

/// Deflated diagonal-plus-rank-one system with `rho > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularSystem {
    pub d: Vec<f64>,
    pub z: Vec<f64>,
    pub rho: f64,
}

impl SecularSystem {
    pub fn new(d: Vec<f64>, z: Vec<f64>, rho: f64) -> Result<Self> {
        if d.len() != z.len() {
            return Err(crate::error::mismatch(d.len(), z.len()));
        }
        if d.iter().chain(&z).any(|x| !x.is_finite()) || !rho.is_finite() {
            return Err(Error::NonFinite("secular system"));
        }
        if !(rho > 0.0) {
            return Err(Error::Precondition(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if d.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition(
                "poles must be strictly ascending".into(),
            ));
        }
        Ok(Self { d, z, rho })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.d.len()
    }
}

/// One root of the secular equation, anchored at pole `pole`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRoot {
    pub pole: usize,
    pub mu: f64,
    pub lambda: f64,
}

/// Plane rotation acting on coordinates `p` and `q`:
/// `e_p ← c e_p + s e_q`, `e_q ← -s e_p + c e_q`. It moves the weight of
/// `z_q` into `z_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub p: usize,
    pub q: usize,
    pub c: f64,
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct DeflationOutcome {
    /// Size of the surviving secular system.
    pub k: usize,
    /// Coordinates of the input: `perm[..k]` feed the secular system in
    /// order, `perm[k..]` are deflated.
    pub perm: Vec<usize>,
    /// Rotations in application order, indexed by input coordinate.
    pub rotations: Vec<Rotation>,
    pub system: SecularSystem,
    /// Eigenvalues of the deflated coordinates, aligned with `perm[k..]`.
    pub deflated_values: Vec<f64>,
    /// Set when the modification weight was negative and the problem was
    /// solved as `-(-D + rho z zᵀ)`; values must be negated on the way out.
    pub negated: bool,
    pub tol: f64,
}

impl DeflationOutcome {
    /// Maps a value of the internal (possibly negated) problem back to the
    /// caller's problem.
    #[inline]
    pub fn unmap(&self, x: f64) -> f64 {
        if self.negated {
            -x
        } else {
            x
        }
    }

    pub fn deflation_fraction(&self) -> f64 {
        let n = self.perm.len();
        if n == 0 {
            0.0
        } else {
            (n - self.k) as f64 / n as f64
        }
    }
}

/// Prepares the merge problem `diag(d_raw) + b z_raw z_rawᵀ`: scales `z` to
/// unit length (folding `‖z_raw‖²` into `rho`), maps a negative weight onto
/// a positive one, sorts the poles and deflates.
pub fn normalize_rankone(
    d_raw: &[f64],
    z_raw: &[f64],
    b: f64,
    tol_factor: f64,
) -> Result<DeflationOutcome> {
    let n = d_raw.len();
    if n == 0 {
        return Err(Error::InvalidDimension(
            "rank-one problem needs n >= 1".into(),
        ));
    }
    if z_raw.len() != n {
        return Err(crate::error::mismatch(n, z_raw.len()));
    }
    if d_raw.iter().chain(z_raw).any(|x| !x.is_finite()) || !b.is_finite() {
        return Err(Error::NonFinite("rank-one data"));
    }
    if b == 0.0 {
        return Err(Error::Precondition(
            "modification weight must be nonzero".into(),
        ));
    }
    let negated = b < 0.0;
    let norm = norm2(z_raw);
    let (rho, z): (f64, Vec<f64>) = if norm == 0.0 {
        (b.abs(), vec![0.0; n])
    } else {
        (
            b.abs() * norm * norm,
            z_raw.iter().map(|v| v / norm).collect(),
        )
    };
    let d: Vec<f64> = if negated {
        d_raw.iter().map(|v| -v).collect()
    } else {
        d_raw.to_vec()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let mut out = deflate_sorted(&order, &d, &z, rho, tol_factor);
    out.negated = negated;
    Ok(out)
}

/// Deflates an already sorted problem. Small `z` entries drop out; pairs of
/// nearly equal poles are merged by a rotation.
pub fn deflate(d: &[f64], z: &[f64], rho: f64, tol_factor: f64) -> Result<DeflationOutcome> {
    if d.len() != z.len() {
        return Err(crate::error::mismatch(d.len(), z.len()));
    }
    if d.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition(
            "deflate requires ascending poles".into(),
        ));
    }
    if !(rho > 0.0) {
        return Err(Error::Precondition(format!(
            "rho must be positive, got {rho}"
        )));
    }
    let order: Vec<usize> = (0..d.len()).collect();
    Ok(deflate_sorted(&order, d, z, rho, tol_factor))
}

fn deflate_sorted(
    order: &[usize],
    d: &[f64],
    z: &[f64],
    rho: f64,
    tol_factor: f64,
) -> DeflationOutcome {
    let dmax = order.iter().fold(0.0f64, |m, &i| m.max(d[i].abs()));
    let tol = tol_factor * EPS * dmax.max(rho);

    let mut dw: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut zw: Vec<f64> = order.iter().map(|&i| z[i]).collect();
    let n = dw.len();
    let mut deflated: Vec<bool> = zw.iter().map(|zi| rho * zi.abs() <= tol).collect();
    let mut rotations = Vec::new();

    let mut prev: Option<usize> = None;
    for j in 0..n {
        if deflated[j] {
            continue;
        }
        let Some(p) = prev else {
            prev = Some(j);
            continue;
        };
        let tau = zw[p].hypot(zw[j]);
        let c = zw[p] / tau;
        let s = zw[j] / tau;
        if ((dw[j] - dw[p]) * c * s).abs() <= tol {
            let (dp, dj) = (dw[p], dw[j]);
            dw[p] = c * c * dp + s * s * dj;
            dw[j] = s * s * dp + c * c * dj;
            zw[p] = tau;
            zw[j] = 0.0;
            deflated[j] = true;
            rotations.push(Rotation {
                p: order[p],
                q: order[j],
                c,
                s,
            });
        } else {
            prev = Some(j);
        }
    }

    let mut keep: Vec<usize> = (0..n).filter(|&i| !deflated[i]).collect();
    keep.sort_by(|&a, &b| dw[a].total_cmp(&dw[b]));
    let gone: Vec<usize> = (0..n).filter(|&i| deflated[i]).collect();

    let system = SecularSystem {
        d: keep.iter().map(|&i| dw[i]).collect(),
        z: keep.iter().map(|&i| zw[i]).collect(),
        rho,
    };
    DeflationOutcome {
        k: keep.len(),
        perm: keep.iter().chain(&gone).map(|&i| order[i]).collect(),
        rotations,
        system,
        deflated_values: gone.iter().map(|&i| dw[i]).collect(),
        negated: false,
        tol,
    }
}

/// Evaluation of `f(τ)/rho = 1/rho + Σ z_k² / (Δ_k - τ)` split at pole `split`,
/// where `Δ_k = d_k - d[origin]`.
struct Eval {
    w: f64,
    psi: f64,
    dpsi: f64,
    phi: f64,
    dphi: f64,
    err: f64,
}

fn evaluate(shift: &[f64], zsq: &[f64], rhoinv: f64, split: usize, tau: f64) -> Eval {
    let (mut psi, mut dpsi, mut err) = (0.0, 0.0, 0.0);
    for k in 0..=split {
        let t = zsq[k] / (shift[k] - tau);
        psi += t;
        dpsi += t / (shift[k] - tau);
        err += psi.abs();
    }
    let (mut phi, mut dphi) = (0.0, 0.0);
    for k in (split + 1..shift.len()).rev() {
        let t = zsq[k] / (shift[k] - tau);
        phi += t;
        dphi += t / (shift[k] - tau);
        err += phi.abs();
    }
    let w = rhoinv + psi + phi;
    Eval {
        w,
        psi,
        dpsi,
        phi,
        dphi,
        err,
    }
}

/// Roots of `c η² - a η + b = 0`, computed without cancellation.
fn quadratic_roots(c: f64, a: f64, b: f64) -> [Option<f64>; 2] {
    if c == 0.0 {
        return if a == 0.0 {
            [None, None]
        } else {
            [Some(b / a), None]
        };
    }
    let disc = (a * a - 4.0 * b * c).max(0.0).sqrt();
    let q = 0.5 * (a + a.signum() * disc);
    if q == 0.0 {
        return [Some(0.0), None];
    }
    [Some(q / c), Some(b / q)]
}

/// Finds root `i` of the system; `trace`, when given, receives every τ at
/// which the function was evaluated together with the bracket in force.
fn solve_root(
    sys: &SecularSystem,
    zsq: &[f64],
    i: usize,
    mut trace: Option<&mut Vec<(f64, f64, f64)>>,
) -> Result<(SecularRoot, u64)> {
    let k = sys.k();
    let d = &sys.d;
    let rhoinv = 1.0 / sys.rho;
    let zz: f64 = zsq.iter().sum();
    let mut evals = 0u64;

    // Pick the pole nearest the root and the initial bracket.
    let (origin, split, mut lo, mut hi) = if i + 1 < k {
        let gap = d[i + 1] - d[i];
        let shift: Vec<f64> = d.iter().map(|&dk| dk - d[i]).collect();
        let mid = evaluate(&shift, zsq, rhoinv, i, 0.5 * gap);
        evals += 1;
        if mid.w == 0.0 {
            let mu = 0.5 * gap;
            return Ok((
                SecularRoot {
                    pole: i,
                    mu,
                    lambda: d[i] + mu,
                },
                evals,
            ));
        }
        if mid.w > 0.0 {
            (i, i, 0.0, 0.5 * gap)
        } else {
            (i + 1, i, -0.5 * gap, 0.0)
        }
    } else {
        (i, i.saturating_sub(1), 0.0, sys.rho * zz)
    };
    let shift: Vec<f64> = d.iter().map(|&dk| dk - d[origin]).collect();

    // Single pole: f has the closed-form root d + rho z².
    if k == 1 {
        let mu = sys.rho * zz;
        return Ok((
            SecularRoot {
                pole: 0,
                mu,
                lambda: d[0] + mu,
            },
            evals,
        ));
    }

    let mut tau = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        if let Some(t) = trace.as_deref_mut() {
            t.push((tau, lo, hi));
        }
        let e = evaluate(&shift, zsq, rhoinv, split, tau);
        evals += 1;
        if e.w == 0.0 {
            converged = true;
            break;
        }
        if e.w < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let bound =
            EPS * (8.0 * (e.phi - e.psi + rhoinv) + e.err + 3.0 * tau.abs() * (e.dpsi + e.dphi));
        if e.w.abs() <= bound || hi - lo <= 2.0 * EPS * lo.abs().max(hi.abs()) {
            converged = true;
            break;
        }

        // Two-pole rational model matching f and f' at τ.
        let da = shift[split] - tau;
        let db = shift[split + 1] - tau;
        let c = e.w - da * e.dpsi - db * e.dphi;
        let a = (da + db) * e.w - da * db * (e.dpsi + e.dphi);
        let b = da * db * e.w;
        let step = quadratic_roots(c, a, b)
            .into_iter()
            .flatten()
            .filter(|eta| eta.is_finite() && tau + eta > lo && tau + eta < hi)
            .min_by(|x, y| x.abs().total_cmp(&y.abs()));
        let next = match step {
            Some(eta) => tau + eta,
            None => 0.5 * (lo + hi),
        };
        let small = (next - tau).abs() <= 2.0 * EPS * next.abs();
        tau = next;
        if small {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            index: i,
            lo: d[origin] + lo,
            hi: d[origin] + hi,
            iterations: MAX_ITER,
        });
    }
    Ok((
        SecularRoot {
            pole: origin,
            mu: tau,
            lambda: d[origin] + tau,
        },
        evals,
    ))
}

/// All `K` roots of `1 + rho Σ z_k² / (d_k - λ) = 0`, ascending.
pub fn solve_secular(sys: &SecularSystem, flops: Option<&FlopCounter>) -> Result<Vec<SecularRoot>> {
    use rayon::prelude::*;
    let zsq: Vec<f64> = sys.z.iter().map(|z| z * z).collect();
    let results: Vec<(SecularRoot, u64)> = (0..sys.k())
        .into_par_iter()
        .map(|i| solve_root(sys, &zsq, i, None))
        .collect::<Result<_>>()?;
    if let Some(f) = flops {
        let evals: u64 = results.iter().map(|r| r.1).sum();
        f.add(evals * 6 * sys.k() as u64);
    }
    Ok(results.into_iter().map(|r| r.0).collect())
}

/// Root `i` together with every evaluation point and the bracket at that
/// time; test hook for the bracketing guarantee.
#[doc(hidden)]
pub fn solve_root_traced(
    sys: &SecularSystem,
    i: usize,
) -> Result<(SecularRoot, Vec<(f64, f64, f64)>)> {
    let zsq: Vec<f64> = sys.z.iter().map(|z| z * z).collect();
    let mut trace = Vec::new();
    let (root, _) = solve_root(sys, &zsq, i, Some(&mut trace))?;
    Ok((root, trace))
}

/// `λ_j - d_i` evaluated through the pole representation of `λ_j`.
#[inline]
fn root_minus_pole(d: &[f64], root: &SecularRoot, i: usize) -> f64 {
    (d[root.pole] - d[i]) + root.mu
}

/// Recomputes the rank-one vector so that the computed roots are the exact
/// eigenvalues of `D + rho ẑ ẑᵀ`.
pub fn lowner_reweight(
    sys: &SecularSystem,
    roots: &[SecularRoot],
    flops: Option<&FlopCounter>,
) -> Result<Vec<f64>> {
    let k = sys.k();
    if roots.len() != k {
        return Err(crate::error::mismatch(k, roots.len()));
    }
    let d = &sys.d;
    let mut zhat = Vec::with_capacity(k);
    for i in 0..k {
        let mut prod = root_minus_pole(d, &roots[k - 1], i);
        for (j, root) in roots.iter().enumerate().take(i) {
            prod *= root_minus_pole(d, root, i) / (d[j] - d[i]);
        }
        for (j, root) in roots.iter().enumerate().take(k - 1).skip(i) {
            prod *= root_minus_pole(d, root, i) / (d[j + 1] - d[i]);
        }
        prod /= sys.rho;
        if prod < 0.0 || !prod.is_finite() {
            return Err(Error::Numeric(format!(
                "negative reweighting radicand {prod:e} at index {i}; roots do not interlace"
            )));
        }
        zhat.push(prod.sqrt().copysign(sys.z[i]));
    }
    if let Some(f) = flops {
        f.add(3 * (k * k) as u64);
    }
    Ok(zhat)
}

/// The eigenvector matrix `Q̂` of `D + rho ẑ ẑᵀ`, evaluated entry by entry
/// from its Cauchy-like formula. Columns are unit length with a nonnegative
/// first component.
#[derive(Debug, Clone)]
pub struct CauchyEigvecs {
    d: Vec<f64>,
    zhat: Vec<f64>,
    roots: Vec<SecularRoot>,
    scale: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `Q̂ · X`
    Left,
    /// `Q̂ᵀ · X`
    TransposeLeft,
}

/// Nominal flops to generate one entry (subtract, subtract, divide, multiply).
pub const ENTRY_FLOPS: u64 = 4;

impl CauchyEigvecs {
    pub fn new(
        sys: &SecularSystem,
        zhat: &[f64],
        roots: &[SecularRoot],
        flops: Option<&FlopCounter>,
    ) -> Self {
        let k = sys.k();
        assert_eq!(zhat.len(), k);
        assert_eq!(roots.len(), k);
        let mut me = Self {
            d: sys.d.clone(),
            zhat: zhat.to_vec(),
            roots: roots.to_vec(),
            scale: vec![1.0; k],
        };
        let mut col = vec![0.0; k];
        for i in 0..k {
            for (r, c) in col.iter_mut().enumerate() {
                *c = me.raw(r, i);
            }
            let norm = norm2(&col);
            let sign = if col.first().is_some_and(|&v| v < 0.0) {
                -1.0
            } else {
                1.0
            };
            me.scale[i] = sign / norm;
        }
        if let Some(f) = flops {
            f.add((ENTRY_FLOPS + 2) * (k * k) as u64);
        }
        me
    }

    #[inline]
    fn raw(&self, r: usize, i: usize) -> f64 {
        let root = &self.roots[i];
        self.zhat[r] / ((self.d[r] - self.d[root.pole]) - root.mu)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.d.len()
    }

    #[inline]
    pub fn entry(&self, r: usize, i: usize) -> f64 {
        self.raw(r, i) * self.scale[i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.k()).map(|r| self.entry(r, i)).collect()
    }

    pub fn roots(&self) -> &[SecularRoot] {
        &self.roots
    }

    pub fn entries(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(rows.len(), cols.len(), |a, b| self.entry(rows[a], cols[b]))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let k = self.k();
        DenseMatrix::from_fn(k, k, |r, i| self.entry(r, i))
    }

    /// `Q̂ X` or `Q̂ᵀ X`, generating `Q̂` one panel at a time.
    pub fn apply(
        &self,
        x: &DenseMatrix,
        side: Side,
        flops: Option<&FlopCounter>,
    ) -> Result<DenseMatrix> {
        use rayon::prelude::*;
        let k = self.k();
        if x.rows() != k {
            return Err(crate::error::mismatch(
                format!("{k} rows"),
                format!("{} rows", x.rows()),
            ));
        }
        let m = x.cols();
        let starts: Vec<usize> = (0..k).step_by(PANEL).collect();
        let parts: Vec<DenseMatrix> = starts
            .par_iter()
            .map(|&r0| {
                let r1 = (r0 + PANEL).min(k);
                match side {
                    Side::Left => {
                        let panel = DenseMatrix::from_fn(r1 - r0, k, |a, i| self.entry(r0 + a, i));
                        let mut out = DenseMatrix::zeros(r1 - r0, m);
                        gemm(1.0, &panel, Op::NoTrans, x, Op::NoTrans, 0.0, &mut out);
                        out
                    }
                    Side::TransposeLeft => {
                        let panel = DenseMatrix::from_fn(k, r1 - r0, |r, b| self.entry(r, r0 + b));
                        let mut out = DenseMatrix::zeros(r1 - r0, m);
                        gemm(1.0, &panel, Op::Trans, x, Op::NoTrans, 0.0, &mut out);
                        out
                    }
                }
            })
            .collect();
        let mut out = DenseMatrix::zeros(k, m);
        for (&r0, part) in starts.iter().zip(&parts) {
            out.set_block(r0, 0, part);
        }
        if let Some(f) = flops {
            f.add(ENTRY_FLOPS * (k * k) as u64 + crate::flops::gemm_flops(k, k, m));
        }
        Ok(out)
    }
}

/// Unit eigenvector of `D + rho ẑ ẑᵀ` for one root, first component
/// nonnegative.
pub fn qhat_column(sys: &SecularSystem, zhat: &[f64], root: &SecularRoot) -> Vec<f64> {
    let mut v: Vec<f64> = sys
        .d
        .iter()
        .zip(zhat)
        .map(|(&dk, &zk)| zk / ((dk - sys.d[root.pole]) - root.mu))
        .collect();
    let norm = norm2(&v);
    let sign = if v.first().is_some_and(|&x| x < 0.0) {
        -1.0
    } else {
        1.0
    };
    v.iter_mut().for_each(|x| *x *= sign / norm);
    v
}

/// `Q̂ X` or `Q̂ᵀ X` without materializing `Q̂`.
pub fn qhat_apply(
    sys: &SecularSystem,
    zhat: &[f64],
    roots: &[SecularRoot],
    x: &DenseMatrix,
    side: Side,
) -> Result<DenseMatrix> {
    CauchyEigvecs::new(sys, zhat, roots, None).apply(x, side, None)
}
