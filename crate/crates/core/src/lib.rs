//! Reconciliation of sample-based probabilistic forecasts across temporal
//! hierarchies.
//!
//! Per-level sample paths are assembled into a joint sample (stacked, ranked
//! or permuted), projected onto the coherent subspace with `S P`, and scored
//! level by level with CRPS and MAE. Level weights of `P` can be chosen by
//! cross-validation.

pub mod cli;
pub mod cvopt;
pub mod error;
pub mod hierarchy;
pub mod reconcile;
pub mod sampling;
pub mod scoring;
pub mod simkit;

pub use error::{Error, Result};
pub use hierarchy::{HierarchySpec, NodeId, SummingMatrix};
pub use reconcile::{Method, ReconciledSample, WeightMatrix};
pub use sampling::{JointSample, LevelSample, Scheme};
pub use scoring::{Metric, ScoreTable};
