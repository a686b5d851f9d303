//! Quantized Gromov-Wasserstein matching between large metric measure spaces.
//!
//! Spaces are partitioned into blocks with representatives, the
//! representatives are aligned by a small GW solve, and block pairs are
//! matched by 1D transport of their radial profiles. The result is a sparse
//! coupling that can be expanded one row at a time.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod alloc_probe;
pub mod diagnostics;
pub mod error;
pub mod gw;
pub mod harness;
pub mod io;
pub mod ot;
pub mod partitioning;
pub mod qgw;
pub mod report;
pub mod space;
pub mod util;

pub use diagnostics::BoundReport;
pub use error::{Error, Result};
pub use gw::{GwConfig, GwInit, GwSolution, InnerSolver};
pub use ot::{Atoms1D, DiscreteCoupling, SparsePlan};
pub use partitioning::{BlockCount, PartitionConfig, PartitionMethod};
pub use qgw::{match_qfgw, match_qgw, ExpandedRow, QgwConfig, QuantizationCoupling};
pub use report::MatchReport;
pub use space::{MmSpace, PointedPartition, SpaceKind, SpaceOptions};
