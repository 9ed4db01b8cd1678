//! Hypothesis testing for sparse high-dimensional instrumental-variable regression.
//!
//! The pipeline has three layers:
//!
//! - [`two_stage`]: column-wise Lasso of covariates on instruments, then a Lasso of
//!   the response on the predicted covariates.
//! - [`inference`]: per-coefficient inverse regressions and bias-corrected
//!   statistics that are approximately standard normal under `β_i = 0`.
//! - [`multiple_testing`]: thresholds on those statistics controlling the false
//!   discovery rate or the expected number of false discoveries.
//!
//! [`simgen`] generates the synthetic confounded designs used to check all of it.

pub mod error;
pub mod inference;
pub mod linalg;
pub mod multiple_testing;
pub mod simgen;
pub mod solver;
pub mod two_stage;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, RealVector};
