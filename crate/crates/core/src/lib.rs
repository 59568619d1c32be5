//! Fractional martingale transforms, β-variation statistics and a Lévy-type
//! characterization test for fractional Brownian motion.
//!
//! Paths live on uniform grids ([`simulate::Path`], [`simulate::Ensemble`]).
//! Transforms in [`fractrans`] use cell-averaged kernel weights, the
//! statistics in [`variation`] work on uniform partitions of those grids, and
//! [`levytest`] assembles them into pass/fail reports.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod experiment;
pub mod fractrans;
pub mod io;
pub mod kernels;
pub mod levytest;
pub mod linalg;
pub mod par;
pub mod simulate;
pub mod variation;

pub use constants::{FracOrder, HurstParam};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentOutput, EXPERIMENTS};
pub use par::Execution;
pub use simulate::{Ensemble, Grid, Path, Process, SingularFunction};
