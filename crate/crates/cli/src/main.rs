//! `tridc`: generate test matrices, solve, benchmark the two eigenvector
//! update paths and exercise the HSS compressor.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 verification failure.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tridc::dc::PathOverride;
use tridc::DcOptions;

#[derive(Parser, Debug)]
#[command(
    name = "tridc",
    version,
    about = "Divide-and-conquer symmetric tridiagonal eigensolver"
)]
struct Cli {
    /// Worker thread cap; 0 uses every core.
    #[arg(long, global = true, env = "TRIDC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a test matrix to a file.
    Gen(GenArgs),
    /// Compute all eigenpairs and print a JSON report.
    Solve(SolveArgs),
    /// Compare the dense and HSS update paths over a range of sizes.
    Bench(BenchArgs),
    /// Compress a dense Toeplitz test matrix and report HSS diagnostics.
    HssTest(HssTestArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Clement,
    Hermite,
    Toeplitz211,
    Sht,
    /// Dense nonsymmetric, diagonally dominant Toeplitz matrix.
    ToeplitzDense,
    /// Dense kinetic-energy Toeplitz matrix.
    Kinetic,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Clement => "clement",
            Kind::Hermite => "hermite",
            Kind::Toeplitz211 => "toeplitz211",
            Kind::Sht => "sht",
            Kind::ToeplitzDense => "toeplitz-dense",
            Kind::Kinetic => "kinetic",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathArg {
    Auto,
    ForceDense,
    ForceHss,
}

impl From<PathArg> for PathOverride {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Auto => PathOverride::Auto,
            PathArg::ForceDense => PathOverride::ForceDense,
            PathArg::ForceHss => PathOverride::ForceHss,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    /// SHT shape parameter; defaults to n.
    #[arg(long)]
    m: Option<usize>,
    /// Kinetic discretization step.
    #[arg(long, default_value_t = 0.1)]
    d: f64,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Built-in tridiagonal generator.
    #[arg(long, value_enum, conflicts_with = "input", requires = "n")]
    kind: Option<Kind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Tridiagonal matrix file.
    #[arg(long = "in", value_name = "PATH", required_unless_present = "kind")]
    input: Option<std::path::PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "auto")]
    path: PathArg,
    #[arg(long, default_value_t = 32)]
    base_size: usize,
    /// Smallest secular system handled by the HSS path under `--path auto`.
    #[arg(long, default_value_t = 1024)]
    switch_threshold: usize,
    #[arg(long, default_value_t = 1e-14)]
    hss_tol: f64,
    #[arg(long, default_value_t = 128)]
    leaf_size: usize,
    #[arg(long, default_value_t = 32)]
    r0: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 32)]
    rank_increment: usize,
    /// Deflation tolerance multiplier.
    #[arg(long, default_value_t = 8.0)]
    tol_factor: f64,
    /// Sampling seed; drawn from the OS when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

impl SolverArgs {
    pub fn options(&self, seed: u64) -> DcOptions {
        DcOptions {
            base_size: self.base_size,
            switch_threshold: self.switch_threshold,
            hss_tol: self.hss_tol,
            leaf_size: self.leaf_size,
            r0: self.r0,
            p: self.p,
            rank_increment: self.rank_increment,
            path: self.path.into(),
            tol_factor: self.tol_factor,
            seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the report here instead of standard output.
    #[arg(long)]
    report: Option<std::path::PathBuf>,
    /// Write eigenvalues, one per line.
    #[arg(long)]
    eigenvalues: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 5e-13)]
    max_orthogonality: f64,
    #[arg(long, default_value_t = 1e-12)]
    max_residual: f64,
    /// Skip the O(n^3) verification step.
    #[arg(long)]
    skip_verify: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchPaths {
    Dense,
    Hss,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "clement")]
    kind: Kind,
    /// Comma-separated sizes.
    #[arg(long = "n", value_delimiter = ',', num_args = 0..)]
    sizes: Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    paths: BenchPaths,
    /// Bisect for the smallest n whose HSS top merge needs fewer flops.
    #[arg(long)]
    crossover: bool,
    #[arg(long, default_value_t = 64)]
    lo: usize,
    #[arg(long, default_value_t = 4096)]
    hi: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: TableFormat,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct HssTestArgs {
    #[arg(long, value_enum, default_value = "toeplitz-dense")]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    #[arg(long, default_value_t = 0.1)]
    d: f64,
    #[arg(long, default_value_t = 128)]
    leaf_size: usize,
    #[arg(long, default_value_t = 32)]
    r0: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 32)]
    rank_increment: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::HssTest(a) => commands::hss_test(&a),
    };
    match result {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
