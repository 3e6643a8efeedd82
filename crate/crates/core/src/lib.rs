//! Gaussian-process regression for large collections of short time series.
//!
//! The length-scale of a stationary kernel is bounded below by requiring that a
//! fraction `α` of the process's spectral energy sits below the Nyquist frequency
//! of the sampling grid. Combined with box constraints on the noise variance this
//! keeps automatic maximum-likelihood fits from collapsing onto the data.
//!
//! Layout:
//! - [`special`]: erf, erfinv, log-gamma, Bessel K, ₂F₁, adaptive quadrature
//! - [`kernels`]: squared-exponential and Matérn covariances and spectral densities
//! - [`bound`]: Nyquist energy fractions and the length-scale lower bound
//! - [`gp`]: exact GP likelihood, gradients, posterior and evaluation metrics
//! - [`fit`]: bounded multi-start maximum likelihood and over-fit diagnostics
//! - [`harness`]: synthetic experiments, batch fitting, CSV input and reports

// `!(x > 0.0)` is used on purpose: it routes NaN to the error path
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod error;
pub mod fit;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod special;

pub use error::{Error, Result};
