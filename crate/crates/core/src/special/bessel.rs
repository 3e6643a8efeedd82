use std::f64::consts::PI;

use super::quad::integrate_adaptive;
use crate::error::{Error, Result};

/// Modified Bessel function of the second kind, `K_ν(x)` for real order and `x > 0`.
///
/// Half-integer orders use the terminating elementary sum; other orders
/// integrate `∫₀^∞ exp(-x cosh t) cosh(νt) dt`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    ln_bessel_k(nu, x).map(f64::exp)
}

/// `ln K_ν(x)`, finite even where `K_ν(x)` itself would overflow.
pub fn ln_bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("bessel_k", format!("need finite x > 0, got {x}")));
    }
    if !nu.is_finite() {
        return Err(Error::domain("bessel_k", format!("order must be finite, got {nu}")));
    }
    let nu = nu.abs();
    if let Some(n) = half_integer_index(nu) {
        if let Some(v) = ln_half_integer(n, x) {
            return Ok(v);
        }
    }
    ln_integral(nu, x)
}

fn half_integer_index(nu: f64) -> Option<u32> {
    let twice = 2.0 * nu;
    if twice == twice.round() && (twice as i64) % 2 == 1 && nu < 50.0 {
        Some((nu - 0.5) as u32)
    } else {
        None
    }
}

// K_{n+1/2}(x) = sqrt(pi / 2x) e^{-x} sum_{k=0}^{n} (n+k)! / (k! (n-k)! (2x)^k)
fn ln_half_integer(n: u32, x: f64) -> Option<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=n {
        let k = k as f64;
        let n = n as f64;
        term *= (n + k) * (n - k + 1.0) / (k * 2.0 * x);
        sum += term;
    }
    if !sum.is_finite() {
        return None;
    }
    Some(0.5 * (PI / (2.0 * x)).ln() - x + sum.ln())
}

fn ln_cosh(y: f64) -> f64 {
    let y = y.abs();
    y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2
}

fn ln_integral(nu: f64, x: f64) -> Result<f64> {
    let exponent = |t: f64| -x * t.cosh() + ln_cosh(nu * t);

    // the integrand peaks near sinh(t) = ν/x; t = 0 is a stationary point too
    let t_peak = if nu > 0.0 { (nu / x).asinh() } else { 0.0 };
    let h_max = exponent(0.0).max(exponent(t_peak));

    // push the upper limit out until the integrand is e^-60 below its peak
    let mut step = 0.5;
    let mut upper = t_peak + step;
    while exponent(upper) - h_max > -60.0 {
        step *= 2.0;
        upper = t_peak + step;
        if upper > 1e4 {
            return Err(Error::NonConvergence {
                what: "bessel_k tail search",
                evaluations: 0,
            });
        }
    }

    let scaled = |t: f64| (exponent(t) - h_max).exp();
    let mut total = 0.0;
    if t_peak > 0.0 {
        total += integrate_adaptive(scaled, 0.0, t_peak, 1e-300, 1e-14)?.value;
    }
    total += integrate_adaptive(scaled, t_peak, upper, 1e-300, 1e-14)?.value;
    Ok(h_max + total.ln())
}
