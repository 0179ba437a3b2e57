use std::fs;
use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use tridc::dc::{solve as dc_solve, top_merge_comparison, verify, PathOverride};
use tridc::hss::{
    compress_randomized, hss_diagnostics, hss_matvec, ClusterTree, HssDiagnostics, HssOptions,
};
use tridc::matgen::{self, ToeplitzKind};
use tridc::report::{InputDescriptor, SolveReport, FORMAT_VERSION};
use tridc::{DenseMatrix, FlopCounter, SymTridiagonal};

use crate::{BenchArgs, BenchPaths, GenArgs, HssTestArgs, InputArgs, Kind, SolveArgs, TableFormat};

pub enum Status {
    Ok,
    VerificationFailed,
}

/// Reconstruction is skipped above this size.
const MAX_RECONSTRUCT: usize = 4000;

fn tridiagonal(kind: Kind, n: usize, m: Option<usize>) -> Result<SymTridiagonal> {
    let t = match kind {
        Kind::Clement => matgen::gen_clement(n)?,
        Kind::Hermite => matgen::gen_hermite(n)?,
        Kind::Toeplitz211 => matgen::gen_toeplitz211(n)?,
        Kind::Sht => matgen::gen_sht(n, m.unwrap_or(n))?,
        Kind::ToeplitzDense | Kind::Kinetic => {
            bail!("{} is a dense matrix, not a tridiagonal one", kind.name())
        }
    };
    Ok(t)
}

fn dense(kind: Kind, n: usize, d: f64) -> Result<DenseMatrix> {
    let k = match kind {
        Kind::ToeplitzDense => ToeplitzKind::DiagDominant,
        Kind::Kinetic => ToeplitzKind::Kinetic,
        _ => bail!(
            "{} is not a dense Toeplitz kind (use toeplitz-dense or kinetic)",
            kind.name()
        ),
    };
    Ok(matgen::gen_toeplitz_dense(n, k, d)?)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn write_output(out: Option<&std::path::Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn gen(a: &GenArgs) -> Result<Status> {
    let (text, n) = match a.kind {
        Kind::ToeplitzDense | Kind::Kinetic => {
            let m = dense(a.kind, a.n, a.d)?;
            (matgen::format_dense(&m), m.rows())
        }
        _ => {
            let t = tridiagonal(a.kind, a.n, a.m)?;
            (matgen::format_tridiag(&t), t.n())
        }
    };
    fs::write(&a.out, &text).with_context(|| format!("writing {}", a.out.display()))?;
    let digest = Sha256::digest(text.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    println!("n={n} sha256={hex} path={}", a.out.display());
    Ok(Status::Ok)
}

fn load(input: &InputArgs) -> Result<(SymTridiagonal, InputDescriptor)> {
    if let Some(path) = &input.input {
        let t =
            matgen::read_tridiag(path).with_context(|| format!("reading {}", path.display()))?;
        let desc = InputDescriptor::File {
            path: path.display().to_string(),
            n: t.n(),
        };
        return Ok((t, desc));
    }
    let (Some(kind), Some(n)) = (input.kind, input.n) else {
        bail!("either --in or --kind with --n is required");
    };
    let t = tridiagonal(kind, n, input.m)?;
    let m = (kind == Kind::Sht).then(|| input.m.unwrap_or(n));
    Ok((
        t,
        InputDescriptor::Generator {
            kind: kind.name().to_string(),
            n,
            m,
        },
    ))
}

pub fn solve(a: &SolveArgs) -> Result<Status> {
    let (t, desc) = load(&a.input)?;
    let opts = a.solver.options(resolve_seed(a.solver.seed));
    let start = Instant::now();
    let (eig, stats) = dc_solve(&t, &opts)?;
    let metrics = if a.skip_verify {
        None
    } else {
        Some(verify(&t, &eig)?)
    };
    let wall = start.elapsed().as_secs_f64();
    let report = SolveReport::new(desc, opts, stats, metrics, wall);
    let mut json = report.to_json()?;
    json.push('\n');
    write_output(a.report.as_deref(), &json)?;
    if let Some(p) = &a.eigenvalues {
        let text: String = eig.values.iter().map(|v| format!("{v:.17e}\n")).collect();
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(m) = metrics {
        if !(m.orthogonality <= a.max_orthogonality && m.residual <= a.max_residual && m.ascending)
        {
            eprintln!(
                "verification failed: orthogonality {:.3e} (limit {:.1e}), residual {:.3e} (limit {:.1e}), ascending {}",
                m.orthogonality, a.max_orthogonality, m.residual, a.max_residual, m.ascending
            );
            return Ok(Status::VerificationFailed);
        }
    }
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    n: usize,
    path: &'static str,
    flops_update_top_merge: u64,
    flops_total: u64,
    hss_rank: Option<usize>,
    deflation_fraction: f64,
    orthogonality: f64,
    residual: f64,
    wall_time_seconds: f64,
}

#[derive(Debug, Serialize)]
struct CrossoverProbe {
    n: usize,
    flops_dense: u64,
    flops_hss: u64,
    ratio: f64,
}

fn emit<T: Serialize>(
    rows: &[T],
    format: TableFormat,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let text = match format {
        TableFormat::Json => serde_json::to_string_pretty(rows)? + "\n",
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    write_output(out, &text)
}

pub fn bench(a: &BenchArgs) -> Result<Status> {
    let seed = resolve_seed(a.solver.seed);
    if a.crossover {
        return crossover(a, seed);
    }
    if a.sizes.is_empty() {
        bail!("--n needs at least one size");
    }
    let paths: &[(PathOverride, &str)] = match a.paths {
        BenchPaths::Dense => &[(PathOverride::ForceDense, "dense")],
        BenchPaths::Hss => &[(PathOverride::ForceHss, "hss")],
        BenchPaths::Both => &[
            (PathOverride::ForceDense, "dense"),
            (PathOverride::ForceHss, "hss"),
        ],
    };
    let mut rows = Vec::new();
    for &n in &a.sizes {
        let t = tridiagonal(a.kind, n, None)?;
        for &(path, label) in paths {
            let opts = tridc::DcOptions {
                path,
                ..a.solver.options(seed)
            };
            let start = Instant::now();
            let (eig, stats) = dc_solve(&t, &opts)?;
            let wall = start.elapsed().as_secs_f64();
            let m = verify(&t, &eig)?;
            let top = stats.top_merge();
            rows.push(BenchRow {
                n,
                path: label,
                flops_update_top_merge: top.map_or(0, |s| s.flops_update),
                flops_total: stats.flops_total,
                hss_rank: top.and_then(|s| s.hss_rank),
                deflation_fraction: top.map_or(0.0, |s| s.deflation_fraction),
                orthogonality: m.orthogonality,
                residual: m.residual,
                wall_time_seconds: wall,
            });
        }
    }
    emit(&rows, a.format, a.out.as_deref())?;
    Ok(Status::Ok)
}

fn crossover(a: &BenchArgs, seed: u64) -> Result<Status> {
    if a.lo < 2 || a.lo >= a.hi {
        bail!(
            "crossover search needs 2 <= lo < hi, got lo={} hi={}",
            a.lo,
            a.hi
        );
    }
    let opts = a.solver.options(seed);
    let mut probes = Vec::new();
    let mut probe = |n: usize| -> Result<bool> {
        let t = tridiagonal(a.kind, n, None)?;
        let (d, h) = top_merge_comparison(&t, &opts)?;
        probes.push(CrossoverProbe {
            n,
            flops_dense: d.flops_update,
            flops_hss: h.flops_update,
            ratio: h.flops_update as f64 / d.flops_update.max(1) as f64,
        });
        Ok(h.flops_update < d.flops_update)
    };
    let (mut lo, mut hi) = (a.lo, a.hi);
    let found = if !probe(hi)? {
        None
    } else if probe(lo)? {
        Some(lo)
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if probe(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    probes.sort_by_key(|p| p.n);
    emit(&probes, a.format, a.out.as_deref())?;
    match found {
        Some(n) => eprintln!("crossover n = {n}"),
        None => eprintln!("no crossover up to n = {}", a.hi),
    }
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct HssTestReport {
    format_version: &'static str,
    kind: &'static str,
    n: usize,
    tol: f64,
    seed: u64,
    diagnostics: HssDiagnostics,
    reconstruction_error: Option<f64>,
    matvec_flops: u64,
    dense_matvec_flops: u64,
    wall_time_seconds: f64,
}

pub fn hss_test(a: &HssTestArgs) -> Result<Status> {
    let m = dense(a.kind, a.n, a.d)?;
    let seed = resolve_seed(a.seed);
    let opts = HssOptions {
        leaf_size: a.leaf_size,
        r0: a.r0,
        p: a.p,
        rank_increment: a.rank_increment,
        tol: a.tol,
        seed,
    };
    let start = Instant::now();
    let tree = ClusterTree::new(a.n, a.leaf_size)?;
    let h = compress_randomized(&m, &tree, &opts)?;
    let wall = start.elapsed().as_secs_f64();
    let reconstruction_error = (a.n <= MAX_RECONSTRUCT)
        .then(|| h.to_dense().sub(&m).frobenius_norm() / m.frobenius_norm());
    let flops = FlopCounter::new();
    let x: Vec<f64> = (0..a.n).map(|i| 1.0 / (1.0 + i as f64)).collect();
    hss_matvec(&h, &x, false, Some(&flops))?;
    let report = HssTestReport {
        format_version: FORMAT_VERSION,
        kind: a.kind.name(),
        n: a.n,
        tol: a.tol,
        seed,
        diagnostics: hss_diagnostics(&h),
        reconstruction_error,
        matvec_flops: flops.get(),
        dense_matvec_flops: 2 * (a.n as u64) * (a.n as u64),
        wall_time_seconds: wall,
    };
    write_output(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    Ok(Status::Ok)
}
