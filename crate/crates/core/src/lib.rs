//! Recovery of an intended-feature subspace from biased feature datasets.
//!
//! A bottleneck autoencoder carries a linear Recovery Layer `A` whose row
//! space is pulled toward the geometric median subspace of the vectors it
//! consumes (least absolute deviations instead of least squares), while a
//! linear classifier is fitted on the recovered coordinates. Reference
//! solvers (PCA, grid search, IRLS) and a planted-direction synthetic
//! generator make the recovery measurable.

pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod ndcore;
pub mod nn;
pub mod oracle;

pub use error::{Result, RiskError};
pub use ndcore::Matrix;
