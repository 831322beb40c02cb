//! Self-supervised covariance estimation for complex-valued data.
//!
//! An estimator maps a window of neighbouring samples to a covariance (or
//! its inverse) for a held-out sample, and is trained by minimising that
//! sample's Gaussian negative log-likelihood. The crate contains the complex
//! linear algebra and autodiff it needs, the attention-based and
//! knowledge-aided architectures, classical shrinkage and Toeplitz
//! baselines, synthetic data generators, and detection metrics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod downstream;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, HermitianPd, C64};
