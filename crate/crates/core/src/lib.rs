//! Trajectory PHD and CPHD filters over sets of trajectories.
//!
//! * [`trajgauss`]: Gaussian algebra over stacked trajectory states.
//! * [`cardesf`]: cardinality distributions and elementary symmetric functions.
//! * [`filters`]: GM-TPHD, GM-TCPHD and the tagged PHD/CPHD baselines.
//! * [`scenario`]: ground truth, measurements and IID-cluster sampling.
//! * [`metrics`]: OSPA, GOSPA and the trajectory metric.
//! * [`experiment`]: Monte Carlo campaigns and their CSV outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cardesf;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod metrics;
pub mod scenario;
pub mod trajgauss;

pub use error::{Error, Result};
