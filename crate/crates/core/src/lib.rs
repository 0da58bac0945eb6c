//! Locally smoothed Gaussian process regression.
//!
//! The crate provides exact global GP regression, the localized posterior
//! obtained by down-weighting training points far from each query, the
//! classical local baselines (k-nearest neighbours, Nadaraya–Watson and
//! weighted kernel ridge regression), and the model-selection and
//! benchmarking machinery used to compare them.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod local;
mod optim;
pub mod random;
pub mod selection;

pub use error::{Error, Result};
pub use gp::{GpModel, PredictiveDistribution};
pub use kernel::{CovFamily, CovKernelParams, Covariance, LocalKernelSpec, Profile};
pub use local::{BandwidthPolicy, LocalModel};
