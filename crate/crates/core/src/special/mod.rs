//! Scalar special functions and quadrature used by the kernel and bound code.
//!
//! Everything here is a pure function of its arguments.

// coefficient tables are copied at full published precision
#![allow(clippy::excessive_precision)]

mod bessel;
mod erf;
mod gamma;
mod hyp2f1;
mod quad;

pub use bessel::{bessel_k, ln_bessel_k};
pub use erf::{erf, erfc, erfinv};
pub use gamma::{gamma_ratio, log_gamma};
pub use hyp2f1::hyp2f1;
pub use quad::{integrate_adaptive, integrate_to_infinity, QuadratureResult, MAX_EVALUATIONS};
