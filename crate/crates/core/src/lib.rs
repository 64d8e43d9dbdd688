//! Pointwise maximal leakage of the additive Gaussian noise mechanism
//! `Y = X + N`, `N ~ N(0, sigma_n^2)`.
//!
//! All leakage values are in nats.

// `!(a < b)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// erf coefficients are kept exactly as published.
#![allow(clippy::excessive_precision)]

pub mod cli;
pub mod envelope;
pub mod error;
pub mod leakage;
pub mod mechanism;
pub mod numerics;
pub mod priors;
pub mod verify;

pub use error::{PmlError, Result};
