//! Maximum-likelihood estimation of latent class models with covariates.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: data model, class probabilities, log-likelihood, responsibilities.
//! * [`pg`]: Pólya-gamma expectations and the weighted least-squares update.
//! * [`estimators`]: nested EM and the competing one-step and three-step routines.
//! * [`harness`]: synthetic data and the multi-start benchmark.
//! * [`io`]: CSV / JSON readers and writers used by the command-line tool.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod pg;

pub use error::{LcError, Result};
pub use estimators::{
    fit, init_random, Algorithm, EstimatorConfig, FitResult, Initialization, StopReason,
};
pub use harness::{run_benchmark, simulate, BenchmarkReport, TrueModel};
pub use model::{Dataset, ModelParams, Responsibilities};
