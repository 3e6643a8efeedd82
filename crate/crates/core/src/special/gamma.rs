use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_405_6;

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("log_gamma", format!("need finite x > 0, got {x}")));
    }
    Ok(ln_abs_gamma(x))
}

// Lanczos approximation with reflection below 1/2. Valid for any non-pole x.
fn ln_abs_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin().abs()).ln() - ln_abs_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut series = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        series += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + series.ln()
}

fn gamma_sign(x: f64) -> f64 {
    if x > 0.0 || (x.floor() as i64) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// `Γ(u) / Γ(v)` for real arguments, including the limit where both sit on
/// poles that differ by an integer (the ratio is then a finite Pochhammer term).
pub fn gamma_ratio(u: f64, v: f64) -> Result<f64> {
    match (is_pole(u), is_pole(v)) {
        (true, true) => {
            let k = v - u;
            let steps = k.abs() as usize;
            if k >= 0.0 {
                // Γ(v) = Γ(u) (u)_k
                let prod: f64 = (0..steps).map(|j| u + j as f64).product();
                Ok(1.0 / prod)
            } else {
                Ok((0..steps).map(|j| v + j as f64).product())
            }
        }
        (true, false) => Err(Error::domain(
            "gamma_ratio",
            format!("numerator Γ({u}) is infinite"),
        )),
        (false, true) => Ok(0.0),
        (false, false) => {
            let sign = gamma_sign(u) * gamma_sign(v);
            Ok(sign * (ln_abs_gamma(u) - ln_abs_gamma(v)).exp())
        }
    }
}
