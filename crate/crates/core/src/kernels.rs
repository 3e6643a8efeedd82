//! Stationary covariance functions on the real line.
//!
//! Spectral densities use the convention `k(r) = ∫ S(s) e^{2πisr} ds`, so a
//! kernel with unit signal variance has a density that integrates to one.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::NoiseModel;
use crate::special::{ln_bessel_k, log_gamma};

/// First jitter tried when a Gram matrix fails to factorize, relative to σ_f².
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up, relative to σ_f².
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelFamily {
    SquaredExponential,
    Matern { nu: f64 },
}

impl KernelFamily {
    pub const MATERN_12: KernelFamily = KernelFamily::Matern { nu: 0.5 };
    pub const MATERN_32: KernelFamily = KernelFamily::Matern { nu: 1.5 };
    pub const MATERN_52: KernelFamily = KernelFamily::Matern { nu: 2.5 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelFamily::SquaredExponential => Ok(()),
            KernelFamily::Matern { nu } if nu > 0.0 && nu.is_finite() => Ok(()),
            KernelFamily::Matern { nu } => {
                Err(Error::invalid(format!("Matérn smoothness must be positive, got {nu}")))
            }
        }
    }

    /// Families whose covariance avoids the Bessel-function path.
    pub fn has_closed_form(&self) -> bool {
        match *self {
            KernelFamily::SquaredExponential => true,
            KernelFamily::Matern { nu } => nu == 0.5 || nu == 1.5 || nu == 2.5,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelFamily::SquaredExponential => write!(f, "se"),
            KernelFamily::Matern { nu: 0.5 } => write!(f, "matern12"),
            KernelFamily::Matern { nu: 1.5 } => write!(f, "matern32"),
            KernelFamily::Matern { nu: 2.5 } => write!(f, "matern52"),
            KernelFamily::Matern { nu } => write!(f, "matern:{nu}"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let family = match lower.as_str() {
            "se" | "rbf" | "squared_exponential" | "squared-exponential" => {
                KernelFamily::SquaredExponential
            }
            "matern12" | "exponential" => KernelFamily::MATERN_12,
            "matern32" => KernelFamily::MATERN_32,
            "matern52" => KernelFamily::MATERN_52,
            other => {
                let nu = other
                    .strip_prefix("matern:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown kernel family `{s}`")))?;
                KernelFamily::Matern { nu }
            }
        };
        family.validate()?;
        Ok(family)
    }
}

impl TryFrom<String> for KernelFamily {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<KernelFamily> for String {
    fn from(value: KernelFamily) -> Self {
        value.to_string()
    }
}

/// Covariance family plus its two hyperparameters, in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// σ_f²
    pub signal_variance: f64,
    /// ℓ
    pub length_scale: f64,
}

/// Derivatives of `k(r)` with respect to σ_f² and ℓ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGradient {
    pub d_signal_variance: f64,
    pub d_length_scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, signal_variance: f64, length_scale: f64) -> Result<Self> {
        family.validate()?;
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "length-scale must be positive, got {length_scale}"
            )));
        }
        Ok(KernelSpec {
            family,
            signal_variance,
            length_scale,
        })
    }

    pub fn se(signal_variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, signal_variance, length_scale)
    }

    pub fn matern(nu: f64, signal_variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern { nu }, signal_variance, length_scale)
    }

    /// Covariance at distance `r ≥ 0`.
    pub fn covariance(&self, r: f64) -> f64 {
        self.signal_variance * self.correlation(r.abs())
    }

    fn correlation(&self, r: f64) -> f64 {
        let l = self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => (-0.5 * (r / l).powi(2)).exp(),
            KernelFamily::Matern { nu: 0.5 } => (-r / l).exp(),
            KernelFamily::Matern { nu: 1.5 } => {
                let u = 3f64.sqrt() * r / l;
                (1.0 + u) * (-u).exp()
            }
            KernelFamily::Matern { nu: 2.5 } => {
                let u = 5f64.sqrt() * r / l;
                (1.0 + u + u * u / 3.0) * (-u).exp()
            }
            KernelFamily::Matern { nu } => matern_general(nu, (2.0 * nu).sqrt() * r / l),
        }
    }

    pub fn covariance_gradient(&self, r: f64) -> KernelGradient {
        let r = r.abs();
        let l = self.length_scale;
        let s2 = self.signal_variance;
        let d_length_scale = match self.family {
            KernelFamily::SquaredExponential => {
                let q = (r / l).powi(2);
                s2 * (-0.5 * q).exp() * q / l
            }
            KernelFamily::Matern { nu: 0.5 } => s2 * (-r / l).exp() * r / (l * l),
            KernelFamily::Matern { nu: 1.5 } => {
                let u = 3f64.sqrt() * r / l;
                s2 * u * u * (-u).exp() / l
            }
            KernelFamily::Matern { nu: 2.5 } => {
                let u = 5f64.sqrt() * r / l;
                s2 * u * u * (1.0 + u) * (-u).exp() / (3.0 * l)
            }
            KernelFamily::Matern { nu } => {
                // d/dz [z^ν K_ν(z)] = -z^ν K_{ν-1}(z)
                let z = (2.0 * nu).sqrt() * r / l;
                if z == 0.0 {
                    0.0
                } else {
                    let ln_norm = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma_or_nan(nu);
                    let ln_k = ln_bessel_k(nu - 1.0, z).unwrap_or(f64::NAN);
                    s2 * (ln_norm + (nu + 1.0) * z.ln() + ln_k).exp() / l
                }
            }
        };
        KernelGradient {
            d_signal_variance: self.correlation(r),
            d_length_scale,
        }
    }

    /// Spectral density at frequency `s` (cycles per time unit), scaled by σ_f².
    pub fn spectral_density(&self, s: f64) -> f64 {
        let l = self.length_scale;
        let unit = match self.family {
            KernelFamily::SquaredExponential => {
                (2.0 * PI).sqrt() * l * (-2.0 * PI * PI * l * l * s * s).exp()
            }
            KernelFamily::Matern { nu } => {
                let ln = std::f64::consts::LN_2 + 0.5 * PI.ln() + ln_gamma_or_nan(nu + 0.5)
                    + nu * (2.0 * nu).ln()
                    - ln_gamma_or_nan(nu)
                    - 2.0 * nu * l.ln()
                    - (nu + 0.5) * (2.0 * nu / (l * l) + 4.0 * PI * PI * s * s).ln();
                ln.exp()
            }
        };
        self.signal_variance * unit
    }

    /// Gram matrix over `times` plus the noise diagonal.
    pub fn covariance_matrix(&self, times: &[f64], noise: &NoiseModel) -> Result<DMatrix<f64>> {
        let n = times.len();
        noise.validate(n)?;
        let mut k = DMatrix::from_fn(n, n, |i, j| {
            if i <= j {
                self.covariance(times[j] - times[i])
            } else {
                0.0
            }
        });
        for j in 0..n {
            for i in (j + 1)..n {
                k[(i, j)] = k[(j, i)];
            }
            k[(j, j)] += noise.variance_at(j);
        }
        Ok(k)
    }
}

fn ln_gamma_or_nan(x: f64) -> f64 {
    log_gamma(x).unwrap_or(f64::NAN)
}

fn matern_general(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    let ln_norm = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma_or_nan(nu);
    match ln_bessel_k(nu, z) {
        Ok(ln_k) => (ln_norm + nu * z.ln() + ln_k).exp().min(1.0),
        Err(_) => f64::NAN,
    }
}

/// Cholesky factor of `matrix`, escalating a diagonal jitter from
/// `1e-10·σ_f²` by factors of ten up to `1e-4·σ_f²` when the plain
/// factorization fails. Returns the factor and the jitter that was added.
pub fn cholesky_with_jitter(
    matrix: &DMatrix<f64>,
    signal_variance: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization { jitter: 0.0 });
    }
    let largest_diagonal = matrix.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    // a pivot at roundoff level relative to the diagonal counts as a failed factorization
    let min_pivot_sq = 64.0 * matrix.nrows() as f64 * f64::EPSILON * largest_diagonal;
    let attempt = |m: DMatrix<f64>| {
        Cholesky::new(m).filter(|c| c.l_dirty().diagonal().iter().all(|d| d * d > min_pivot_sq))
    };
    if let Some(chol) = attempt(matrix.clone()) {
        return Ok((chol, 0.0));
    }
    let mut relative = JITTER_START;
    while relative <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = relative * signal_variance;
        let mut jittered = matrix.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = attempt(jittered) {
            return Ok((chol, jitter));
        }
        relative *= 10.0;
    }
    Err(Error::Factorization {
        jitter: JITTER_MAX * signal_variance,
    })
}
