//! Divide-and-conquer eigensolver for symmetric tridiagonal matrices.
//!
//! Each merge step reduces to a diagonal-plus-rank-one problem whose
//! eigenvector matrix is Cauchy-like. Small merges update the eigenvectors
//! with two dense products; large merges compress that matrix into
//! hierarchically semiseparable (HSS) form by randomized sampling and apply
//! it with a fast structured multiply.

pub mod dc;
pub mod dense;
pub mod error;
pub mod flops;
pub mod hss;
pub mod jacobi;
pub mod matgen;
pub mod report;
pub mod secular;

pub use dc::{
    solve, verify, DcOptions, EigenDecomposition, MergeStats, PathChoice, PathOverride, SolveStats,
    VerifyMetrics,
};
pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use flops::FlopCounter;
pub use hss::{HssMatrix, HssOptions};
pub use matgen::SymTridiagonal;
pub use report::SolveReport;
