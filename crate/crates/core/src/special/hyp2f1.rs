//! Gauss hypergeometric function on the non-positive real axis.
//!
//! `x ∈ [-1, 0]` goes through a Pfaff transformation onto `z = x/(x-1) ∈ [0, 1/2]`
//! and a plain power series. `x < -1` uses the `1/x` connection formula, whose
//! inner functions again land in `[-1, 0)`.

use super::gamma::gamma_ratio;
use crate::error::{Error, Result};

const MAX_TERMS: usize = 100_000;

fn is_non_positive_integer(v: f64) -> bool {
    v <= 0.0 && v == v.floor()
}

/// `₂F₁(a, b; c; x)` for `x ≤ 0`.
pub fn hyp2f1(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    if ![a, b, c, x].iter().all(|v| v.is_finite()) {
        return Err(Error::domain("hyp2f1", "arguments must be finite"));
    }
    if x > 0.0 {
        return Err(Error::domain(
            "hyp2f1",
            format!("only x <= 0 is supported, got {x}"),
        ));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x >= -1.0 {
        return near_origin(a, b, c, x);
    }

    // A&S 15.3.7
    let w = 1.0 / x;
    let neg = -x;
    let first = if b == a {
        return Err(Error::domain("hyp2f1", "a == b needs the logarithmic case"));
    } else {
        let coef = gamma_ratio(c, b)? * gamma_ratio(b - a, c - a)?;
        if coef == 0.0 {
            0.0
        } else {
            coef * neg.powf(-a) * near_origin(a, a - c + 1.0, a - b + 1.0, w)?
        }
    };
    let second = {
        let coef = gamma_ratio(c, a)? * gamma_ratio(a - b, c - b)?;
        if coef == 0.0 {
            0.0
        } else {
            coef * neg.powf(-b) * near_origin(b, b - c + 1.0, b - a + 1.0, w)?
        }
    };
    Ok(first + second)
}

// x in [-1, 0)
fn near_origin(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    if is_non_positive_integer(a) || is_non_positive_integer(b) || a == 0.0 || b == 0.0 {
        return series(a, b, c, x);
    }
    if is_non_positive_integer(c) {
        return Err(Error::domain(
            "hyp2f1",
            format!("c = {c} is a non-positive integer"),
        ));
    }
    // Pfaff: pick the form whose series terms are all positive when possible
    let z = x / (x - 1.0);
    let scale = 1.0 - x;
    if a > 0.0 && c - b > 0.0 || !(c - a > 0.0 && b > 0.0) {
        Ok(scale.powf(-a) * series(a, c - b, c, z)?)
    } else {
        Ok(scale.powf(-b) * series(c - a, b, c, z)?)
    }
}

fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..MAX_TERMS {
        let n = n as f64;
        let numerator = (a + n) * (b + n);
        if numerator == 0.0 {
            return Ok(sum);
        }
        let denominator = (c + n) * (n + 1.0);
        if denominator == 0.0 {
            return Err(Error::domain(
                "hyp2f1",
                format!("series hits the pole c + n = 0 (c = {c})"),
            ));
        }
        term *= numerator / denominator * z;
        sum += term;
        let next_ratio = ((a + n + 1.0) * (b + n + 1.0) / ((c + n + 1.0) * (n + 2.0)) * z).abs();
        if term.abs() <= 1e-17 * sum.abs() && next_ratio < 1.0 {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        what: "hypergeometric series",
        evaluations: MAX_TERMS,
    })
}
