//! Test-matrix generators and the plain-text matrix file format.
//!
//! Tridiagonal files hold three lines: the dimension `n`, the `n` diagonal
//! entries, and the `n - 1` off-diagonal entries. Dense files hold a
//! `rows cols` header followed by one line per row. Values are written with
//! 17 significant digits so that reading a written file is bit-exact.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{mismatch, Error, Result};

/// Symmetric tridiagonal matrix; only the upper copy of the off-diagonal
/// is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidDimension(
                "tridiagonal matrix needs n >= 1".into(),
            ));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(mismatch(
                format!("{} off-diagonal entries", diag.len() - 1),
                format!("{}", offdiag.len()),
            ));
        }
        if diag.iter().chain(&offdiag).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tridiagonal entries"));
        }
        Ok(Self { diag, offdiag })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.n();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &a) in self.diag.iter().enumerate() {
            m.set(i, i, a);
        }
        for (i, &b) in self.offdiag.iter().enumerate() {
            m.set(i, i + 1, b);
            m.set(i + 1, i, b);
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        let d: f64 = self.diag.iter().map(|x| x * x).sum();
        let o: f64 = self.offdiag.iter().map(|x| x * x).sum();
        (d + 2.0 * o).sqrt()
    }

    /// `y = T x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(a, v)| a * v).collect();
        for (i, &b) in self.offdiag.iter().enumerate() {
            y[i] += b * x[i + 1];
            y[i + 1] += b * x[i];
        }
        y
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidDimension("n must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Clement (Kac) matrix of dimension `n`: zero diagonal, off-diagonal
/// `sqrt(i (n - i))`. Its eigenvalues are `n - 1 - 2k`.
pub fn gen_clement(n: usize) -> Result<SymTridiagonal> {
    check_n(n)?;
    let off = (1..n).map(|i| ((i * (n - i)) as f64).sqrt()).collect();
    SymTridiagonal::new(vec![0.0; n], off)
}

/// Hermite-type matrix: zero diagonal, off-diagonal `sqrt(i)`.
pub fn gen_hermite(n: usize) -> Result<SymTridiagonal> {
    check_n(n)?;
    let off = (1..n).map(|i| (i as f64).sqrt()).collect();
    SymTridiagonal::new(vec![0.0; n], off)
}

/// `tridiag(1, 2, 1)`, eigenvalues `2 + 2 cos(k pi / (n + 1))`.
pub fn gen_toeplitz211(n: usize) -> Result<SymTridiagonal> {
    check_n(n)?;
    SymTridiagonal::new(vec![2.0; n], vec![1.0; n - 1])
}

/// Closed-form spectrum of [`gen_toeplitz211`], ascending.
pub fn toeplitz211_spectrum(n: usize) -> Vec<f64> {
    (1..=n)
        .rev()
        .map(|k| 2.0 + 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos())
        .collect()
}

/// Closed-form spectrum of [`gen_clement`], ascending.
pub fn clement_spectrum(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * k as f64 - (n as f64 - 1.0)).collect()
}

fn sht_c(l: f64, m: f64) -> f64 {
    let num = (l - m + 1.0) * (l - m + 2.0) * (l + m + 1.0) * (l + m + 2.0);
    let den = (2.0 * l + 1.0) * (2.0 * l + 3.0) * (2.0 * l + 3.0) * (2.0 * l + 5.0);
    (num / den).sqrt()
}

fn sht_d(l: f64, m: f64) -> f64 {
    (2.0 * l * (l + 1.0) - 2.0 * m * m - 1.0) / ((2.0 * l - 1.0) * (2.0 * l + 3.0))
}

/// Tridiagonal matrix of the spherical-harmonic transform for order `m`:
/// `diag[j] = d_{m+2j}`, `offdiag[j] = c_{m+2j}`.
pub fn gen_sht(n: usize, m: usize) -> Result<SymTridiagonal> {
    check_n(n)?;
    let mf = m as f64;
    let diag = (0..n).map(|j| sht_d((m + 2 * j) as f64, mf)).collect();
    let off = (0..n - 1).map(|j| sht_c((m + 2 * j) as f64, mf)).collect();
    SymTridiagonal::new(diag, off)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToeplitzKind {
    /// `a_ii = n^2`, `a_ij = i - j`; nonsymmetric.
    DiagDominant,
    /// `a_ii = pi^2 / (6 d^2)`, `a_ij = (-1)^(i-j) / ((i-j)^2 d^2)`.
    Kinetic,
}

/// Dense Toeplitz test matrices for the standalone compression benchmark.
/// `d` is the kinetic-energy discretization step (ignored for the
/// diagonally dominant kind, but still required to be positive).
pub fn gen_toeplitz_dense(n: usize, kind: ToeplitzKind, d: f64) -> Result<DenseMatrix> {
    check_n(n)?;
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "discretization step must be positive, got {d}"
        )));
    }
    let m = match kind {
        ToeplitzKind::DiagDominant => {
            let nn = (n * n) as f64;
            DenseMatrix::from_fn(n, n, |i, j| if i == j { nn } else { i as f64 - j as f64 })
        }
        ToeplitzKind::Kinetic => {
            let d2 = d * d;
            let diag = PI * PI / (6.0 * d2);
            DenseMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    diag
                } else {
                    let k = i.abs_diff(j);
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sign / ((k * k) as f64 * d2)
                }
            })
        }
    };
    Ok(m)
}

fn fmt_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn format_tridiag(t: &SymTridiagonal) -> String {
    let mut s = format!("{}\n", t.n());
    fmt_values(&mut s, &t.diag);
    fmt_values(&mut s, &t.offdiag);
    s
}

pub fn write_tridiag(t: &SymTridiagonal, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_tridiag(t))?;
    Ok(())
}

fn parse_err(record: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        record: record.into(),
        message: message.into(),
    }
}

fn parse_values(line: Option<&str>, record: &str, expected: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| parse_err(record, "missing line"))?;
    let mut out = Vec::with_capacity(expected);
    for (k, tok) in line.split_whitespace().enumerate() {
        let v: f64 = tok.parse().map_err(|_| {
            parse_err(
                format!("{record}, entry {}", k + 1),
                format!("not a number: {tok:?}"),
            )
        })?;
        if !v.is_finite() {
            return Err(parse_err(
                format!("{record}, entry {}", k + 1),
                "non-finite value",
            ));
        }
        out.push(v);
    }
    if out.len() != expected {
        return Err(parse_err(
            record,
            format!(
                "length mismatch: expected {expected} entries, found {}",
                out.len()
            ),
        ));
    }
    Ok(out)
}

pub fn parse_tridiag(text: &str) -> Result<SymTridiagonal> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("line 1 (header)", "empty file"))?;
    let n: usize = header.trim().parse().map_err(|_| {
        parse_err(
            "line 1 (header)",
            format!("expected a single dimension, found {header:?}"),
        )
    })?;
    if n == 0 {
        return Err(parse_err("line 1 (header)", "dimension must be at least 1"));
    }
    let diag = parse_values(lines.next(), "line 2 (diagonal)", n)?;
    // A 1x1 matrix may omit the empty off-diagonal line.
    let off_line = lines.next().or(if n == 1 { Some("") } else { None });
    let off = parse_values(off_line, "line 3 (off-diagonal)", n - 1)?;
    if let Some((k, extra)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(
            format!("line {}", k + 4),
            format!("unexpected trailing content {extra:?}"),
        ));
    }
    SymTridiagonal::new(diag, off)
}

pub fn read_tridiag(path: impl AsRef<Path>) -> Result<SymTridiagonal> {
    parse_tridiag(&std::fs::read_to_string(path)?)
}

pub fn format_dense(m: &DenseMatrix) -> String {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    let mut row = Vec::with_capacity(m.cols());
    for i in 0..m.rows() {
        row.clear();
        row.extend((0..m.cols()).map(|j| m.get(i, j)));
        fmt_values(&mut s, &row);
    }
    s
}

pub fn write_dense(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_dense(m))?;
    Ok(())
}

pub fn parse_dense(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("line 1 (header)", "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            parse_err(
                "line 1 (header)",
                format!("expected `rows cols`, found {header:?}"),
            )
        })?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(
            "line 1 (header)",
            format!("expected `rows cols`, found {header:?}"),
        ));
    };
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        let vals = parse_values(
            lines.next(),
            &format!("line {} (row {})", i + 2, i + 1),
            cols,
        )?;
        for (j, v) in vals.into_iter().enumerate() {
            m.set(i, j, v);
        }
    }
    Ok(m)
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_dense(&std::fs::read_to_string(path)?)
}
