//! K-sample causal conditional discrepancy testing.
//!
//! The crate composes vector matching (generalized propensity score trimming)
//! with conditional distance correlation to test whether potential-outcome
//! distributions differ across nominal treatment groups. It also ships the
//! simulation generators and the Monte Carlo harness used to study validity
//! and power of the procedure against unconditional distance correlation,
//! plain conditional distance correlation and conditional MANOVA.
//!
//! Module map:
//!
//! - [`distances`]: Euclidean distance matrices, centering, Gaussian kernels,
//!   Haar-random orthogonal matrices.
//! - [`dcorr`]: unconditional distance correlation and its permutation test.
//! - [`cdcorr`]: kernel-weighted conditional distance correlation and its
//!   local-permutation test.
//! - [`cmanova`]: nested multivariate linear models compared via the
//!   Pillai-Bartlett trace.
//! - [`matching`]: baseline-category multinomial logit propensities and
//!   vector matching.
//! - [`pipeline`]: datasets, one-hot encoding, Causal cDcorr and dispatch.
//! - [`sims`]: the four simulation settings.
//! - [`harness`]: experiment orchestration, Wald intervals, CSV formats.

pub mod cdcorr;
pub mod cmanova;
pub mod dcorr;
pub mod distances;
mod error;
pub mod harness;
pub mod ks;
pub mod matching;
mod matrix;
pub mod pipeline;
pub mod seeding;
pub mod sims;

pub use error::{Error, Result};
pub use matrix::RealMatrix;
