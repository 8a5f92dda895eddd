//! Optimal transport between finitely supported measures under relativistic
//! costs `c_t(x, y) = h((y - x) / t)`, where `h` is strictly convex and
//! bounded on a convex body and `+inf` outside it.
//!
//! The crate provides exact optimal plans and dual certificates, the
//! critical time below which no finite-cost plan exists, sampled cost
//! curves, boundary-slope diagnostics for `h`, plan algebra (marginals,
//! restriction, composition, alternating-chain certificates) and the
//! refinement experiments driven by the `relot` command line tool.

pub mod body;
pub mod chain;
pub mod cost;
pub mod error;
pub mod extended;
mod flow;
pub mod harness;
pub mod measure;
pub mod plan;
pub mod slope;
pub mod solver;
pub mod vector;

pub use body::{BodyKind, BodySpec, ConvexBody};
pub use chain::{chain_decompose, check_certificate, ChainCertificate, ChainOutcome};
pub use cost::{CostFamily, CostModel, CostSpec};
pub use error::{Error, Result};
pub use extended::{ExtReal, Slope};
pub use measure::DiscreteMeasure;
pub use plan::TransportPlan;
pub use slope::{
    directional_slope, is_highly_relativistic, is_theta_direction, Schedule, SlopeClassification,
};
pub use solver::{CostCurve, OtInstance, SolveResult};
