//! JSON run report.

use serde::{Deserialize, Serialize};

use crate::diagnostics::BoundReport;
use crate::error::{Error, Result};
use crate::gw::{GwInit, InnerSolver};
use crate::qgw::QgwConfig;
use crate::space::{MmSpace, PointedPartition, SpaceKind};

/// Bumped whenever a field changes meaning or is removed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub schema_version: u32,
    /// `"qgw"` or `"qfgw"`.
    pub method: String,
    pub params: ReportParams,
    pub source: SideReport,
    pub target: SideReport,
    pub global: GlobalReport,
    pub local: LocalReport,
    /// GW loss of the expanded coupling; omitted when `N_X * N_Y > 10^6`.
    pub full_gw_loss: Option<f64>,
    pub bounds: Option<BoundReport>,
    /// `sqrt(full loss) <= sqrt(global loss) + 8 max(eps_X, eps_Y)`.
    pub thm3_chain: Option<ChainCheck>,
    /// The qGW metric reading needs equal block counts on both sides.
    pub metric_interpretation_available: bool,
    /// Wall-clock seconds. Excluded from determinism comparisons.
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub alpha: f64,
    pub beta: f64,
    pub inner: InnerSolver,
    pub epsilon: Option<f64>,
    pub max_outer_iter: usize,
    pub conv_tol: f64,
    pub init: String,
    pub support_threshold: f64,
}

impl ReportParams {
    pub fn from_config(c: &QgwConfig) -> Self {
        ReportParams {
            alpha: c.alpha,
            beta: c.beta,
            inner: c.gw.inner,
            epsilon: c.gw.epsilon,
            max_outer_iter: c.gw.max_outer_iter,
            conv_tol: c.gw.conv_tol,
            init: match c.gw.init {
                GwInit::Product => "product",
                GwInit::IdentityIfSquare => "identity_if_square",
                GwInit::Provided(_) => "provided",
            }
            .to_string(),
            support_threshold: c.support_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub kind: SpaceKind,
    pub points: usize,
    pub blocks: usize,
    pub min_block_size: usize,
    pub max_block_size: usize,
}

impl SideReport {
    pub fn new(space: &MmSpace, partition: &PointedPartition) -> Self {
        SideReport {
            kind: space.kind(),
            points: space.len(),
            blocks: partition.len(),
            min_block_size: partition.blocks().iter().map(Vec::len).min().unwrap_or(0),
            max_block_size: partition.max_block_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    /// GW loss of the (thresholded) global coupling on the representatives.
    pub loss: f64,
    /// Value of the solved objective (fused loss for qFGW).
    pub objective: f64,
    pub feature_loss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub support: usize,
    pub dropped_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub pairs: usize,
    pub nnz: usize,
    pub support_bound: usize,
    pub feature_matching: Option<FeatureMatchingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatchingReport {
    pub rule: String,
    pub exact_pairs: usize,
    pub norm_profile_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub partition_s: Option<f64>,
    pub global_s: f64,
    pub local_s: f64,
    pub diagnostics_s: f64,
    pub total_s: f64,
}

impl MatchReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("report parse: {e}")))
    }

    /// The report as JSON with the `timings` object removed.
    pub fn without_timings(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::invalid(e.to_string()))?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        Ok(v)
    }
}
