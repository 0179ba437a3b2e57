//! Machine-readable solve reports.

use serde::{Deserialize, Serialize};

use crate::dc::{DcOptions, MergeStats, SolveStats, VerifyMetrics};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1.0";

/// Where the matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InputDescriptor {
    Generator {
        kind: String,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
    },
    File {
        path: String,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub flops: u64,
    pub flops_base: u64,
    pub deflation_fraction: f64,
    pub top_deflation_fraction: Option<f64>,
    pub max_hss_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub format_version: String,
    pub input: InputDescriptor,
    pub options: DcOptions,
    pub seed: u64,
    pub merges: Vec<MergeStats>,
    pub totals: Totals,
    pub verification: Option<VerifyMetrics>,
    pub wall_time_seconds: f64,
}

impl SolveReport {
    pub fn new(
        input: InputDescriptor,
        options: DcOptions,
        stats: SolveStats,
        verification: Option<VerifyMetrics>,
        wall_time_seconds: f64,
    ) -> Self {
        let totals = Totals {
            flops: stats.flops_total,
            flops_base: stats.flops_base,
            deflation_fraction: stats.deflation_fraction,
            top_deflation_fraction: stats.top_merge().map(|m| m.deflation_fraction),
            max_hss_rank: stats.max_hss_rank,
        };
        Self {
            format_version: FORMAT_VERSION.to_string(),
            input,
            seed: options.seed,
            options,
            merges: stats.merges,
            totals,
            verification,
            wall_time_seconds,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a report, rejecting any format whose major version differs
    /// from ours.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse {
                record: "format_version".into(),
                message: "missing or not a string".into(),
            })?;
        if major(version) != major(FORMAT_VERSION) {
            return Err(Error::UnsupportedVersion(version.to_string()));
        }
        Ok(serde_json::from_value(value)?)
    }
}

fn major(v: &str) -> Option<u64> {
    v.split('.').next()?.parse().ok()
}
