//! Stochastic distribution planning: Markov DER adoption scenarios, quasi-static
//! radial power flow for every (trial, year) job, and transformer-overload risk
//! reporting.
//!
//! The workflow has three stages:
//!
//! 1. pre-processing: [`adoption`] generates `n x m` adoption scenarios and
//!    [`profiles`] materializes the hourly injections for each job bundle;
//! 2. execution: [`execution`] fans the yearly [`powerflow`] jobs out over a
//!    worker pool backed by a write-once artifact store;
//! 3. post-processing: [`postprocess`] reduces the per-job loadings into
//!    first-violation years, per-year overload frequencies and an SVG map.
//!
//! [`pipeline`] ties the stages together and backs the `gridplan` binary.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adoption;
pub mod config;
pub mod error;
pub mod execution;
pub mod feeder;
pub mod pipeline;
pub mod postprocess;
pub mod powerflow;
pub mod profiles;
pub mod seed;

pub use error::{Error, Result};

/// Hours in one simulated (non-leap) year.
pub const HOURS_PER_YEAR: usize = 8760;
