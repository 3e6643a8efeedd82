//! Nyquist spectral-energy lower bound on the kernel length-scale.
//!
//! Samples spaced `Δt` apart cannot resolve frequencies above `1/(2Δt)`. A
//! length-scale `ℓ` is admissible when at least a fraction `α` of the kernel's
//! spectral energy lies inside `[-1/(2Δt), 1/(2Δt)]`; the smallest such `ℓ` is
//! the bound `a_ℓ(α)`. For the squared exponential the fraction is
//! `erf(πℓ / (√2 Δt))`, which inverts in closed form. For Matérn kernels the
//! fraction is integrated numerically and inverted by bisection.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::special::{erf, erfinv, gamma_ratio, hyp2f1, integrate_adaptive, integrate_to_infinity};

pub const DEFAULT_ALPHA: f64 = 0.99;

/// Bisection bracket for the Matérn bound, in units of Δt.
pub const BISECTION_BRACKET: (f64, f64) = (1e-6, 1e6);
pub const BISECTION_REL_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 200;

/// How Δt is derived from irregular sampling times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapRule {
    /// Shortest gap between consecutive times (least restrictive bound).
    #[default]
    Minimum,
    /// Median gap. Not the standard rule; reported as such by the CLI.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingInfo {
    pub delta_t: f64,
    pub nyquist_frequency: f64,
    /// All consecutive gaps equal within 1e-9 relative.
    pub uniform: bool,
}

impl SamplingInfo {
    pub fn from_delta_t(delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(Error::invalid(format!("Δt must be positive, got {delta_t}")));
        }
        Ok(SamplingInfo {
            delta_t,
            nyquist_frequency: 0.5 / delta_t,
            uniform: true,
        })
    }
}

/// Sampling interval from strictly increasing `times`, using the minimum gap.
pub fn delta_t_from_times(times: &[f64]) -> Result<SamplingInfo> {
    sampling_info(times, GapRule::Minimum)
}

pub fn sampling_info(times: &[f64], rule: GapRule) -> Result<SamplingInfo> {
    if times.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two sampling times, got {}",
            times.len()
        )));
    }
    let mut gaps = Vec::with_capacity(times.len() - 1);
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        if gap == 0.0 {
            return Err(Error::invalid(format!("duplicate sampling time {}", w[0])));
        }
        if !(gap > 0.0) {
            return Err(Error::invalid(format!(
                "sampling times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        gaps.push(gap);
    }
    gaps.sort_by(f64::total_cmp);
    let smallest = gaps[0];
    let largest = gaps[gaps.len() - 1];
    let delta_t = match rule {
        GapRule::Minimum => smallest,
        GapRule::Median => {
            let m = gaps.len();
            if m % 2 == 1 {
                gaps[m / 2]
            } else {
                0.5 * (gaps[m / 2 - 1] + gaps[m / 2])
            }
        }
    };
    Ok(SamplingInfo {
        delta_t,
        nyquist_frequency: 0.5 / delta_t,
        uniform: largest - smallest <= 1e-9 * largest,
    })
}

/// Energy fraction `α`, lower bound `a_ℓ` and optional upper bound on ℓ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    pub alpha: f64,
    pub lower: f64,
    pub upper: Option<f64>,
}

impl BoundConfig {
    /// Lower bound only (`[a_ℓ, ∞)`).
    pub fn new(family: KernelFamily, alpha: f64, delta_t: f64) -> Result<Self> {
        Ok(BoundConfig {
            alpha,
            lower: length_scale_bound(family, alpha, delta_t)?,
            upper: None,
        })
    }

    /// Bound from a sampling grid, with the upper end at `t_n - t_1`.
    ///
    /// When the span does not exceed `a_ℓ` (very rough kernels on few points)
    /// the upper end is dropped rather than producing an empty interval.
    pub fn for_times(family: KernelFamily, alpha: f64, times: &[f64], rule: GapRule) -> Result<Self> {
        let info = sampling_info(times, rule)?;
        let lower = length_scale_bound(family, alpha, info.delta_t)?;
        let span = times[times.len() - 1] - times[0];
        Ok(BoundConfig {
            alpha,
            lower,
            upper: (span > lower).then_some(span),
        })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("α must lie in (0, 1), got {alpha}")))
    }
}

/// Squared-exponential energy fraction below Nyquist: `erf(πℓ / (√2 Δt))`.
pub fn se_energy_fraction(length_scale: f64, delta_t: f64) -> f64 {
    erf(PI * length_scale / (SQRT_2 * delta_t))
}

/// Matérn energy fraction below Nyquist, by adaptive quadrature of the
/// unit-variance spectral density.
pub fn matern_energy_fraction(nu: f64, length_scale: f64, delta_t: f64) -> Result<f64> {
    check_positive("ν", nu)?;
    energy_fraction_quadrature(KernelFamily::Matern { nu }, length_scale, delta_t)
}

/// Energy fraction for any family by integrating its spectral density over
/// `[0, 1/2]` in units of Δt and doubling.
pub fn energy_fraction_quadrature(family: KernelFamily, length_scale: f64, delta_t: f64) -> Result<f64> {
    check_positive("length-scale", length_scale)?;
    check_positive("Δt", delta_t)?;
    // the fraction depends on ℓ/Δt only; integrating in those units keeps the bound exactly linear in Δt
    let ratio = length_scale / delta_t;
    let spec = KernelSpec::new(family, 1.0, ratio)?;
    // the density has width ~1/ℓ; geometric breakpoints from there keep a
    // narrow peak at s = 0 from slipping between the quadrature nodes
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = (0.1 / ratio).min(0.5);
    loop {
        total += integrate_adaptive(|s| spec.spectral_density(s), lo, hi, 1e-16, 1e-13)?.value;
        if hi >= 0.5 {
            break;
        }
        lo = hi;
        hi = (hi * 10.0).min(0.5);
    }
    let inside = 2.0 * total;
    if inside <= 0.5 {
        return Ok(inside);
    }
    // near 1 the in-band sum only resolves to an ulp; the small tail carries
    // full relative precision and keeps the fraction strictly increasing
    let tail = integrate_to_infinity(|s| spec.spectral_density(s), 0.5, 1e-300, 1e-13)?.value;
    Ok((1.0 - 2.0 * tail).clamp(0.0, 1.0))
}

/// Closed-form Matérn energy fraction through ₂F₁:
///
/// `√(2π) (ℓ/Δt) Γ(ν+½) / (√ν Γ(ν)) · ₂F₁(½, ν+½; 3/2; -π²ℓ²/(2νΔt²))`.
///
/// Serves as an independent check on [`matern_energy_fraction`].
pub fn matern_energy_fraction_closed_form(nu: f64, length_scale: f64, delta_t: f64) -> Result<f64> {
    check_positive("ν", nu)?;
    check_positive("length-scale", length_scale)?;
    check_positive("Δt", delta_t)?;
    let ratio = length_scale / delta_t;
    let x = -(PI * ratio).powi(2) / (2.0 * nu);
    let prefactor = (2.0 * PI).sqrt() * ratio * gamma_ratio(nu + 0.5, nu)? / nu.sqrt();
    Ok(prefactor * hyp2f1(0.5, nu + 0.5, 1.5, x)?)
}

/// Energy fraction through the primary path for each family.
pub fn energy_fraction(family: KernelFamily, length_scale: f64, delta_t: f64) -> Result<f64> {
    family.validate()?;
    match family {
        KernelFamily::SquaredExponential => {
            check_positive("length-scale", length_scale)?;
            check_positive("Δt", delta_t)?;
            Ok(se_energy_fraction(length_scale, delta_t))
        }
        KernelFamily::Matern { nu } => matern_energy_fraction(nu, length_scale, delta_t),
    }
}

/// Smallest length-scale keeping a fraction `alpha` of spectral energy below
/// the Nyquist frequency `1/(2Δt)`.
pub fn length_scale_bound(family: KernelFamily, alpha: f64, delta_t: f64) -> Result<f64> {
    family.validate()?;
    check_alpha(alpha)?;
    check_positive("Δt", delta_t)?;
    match family {
        KernelFamily::SquaredExponential => Ok(SQRT_2 * erfinv(alpha)? / PI * delta_t),
        KernelFamily::Matern { nu } => Ok(bisect_unit_bound(nu, alpha)? * delta_t),
    }
}

// bound in units of Δt, bisecting in log ℓ on the monotone energy fraction
fn bisect_unit_bound(nu: f64, alpha: f64) -> Result<f64> {
    let fraction = |ratio: f64| matern_energy_fraction(nu, ratio, 1.0);
    let (mut lo, mut hi) = (BISECTION_BRACKET.0.ln(), BISECTION_BRACKET.1.ln());
    if fraction(lo.exp())? > alpha || fraction(hi.exp())? < alpha {
        return Err(Error::NonConvergence {
            what: "length-scale bound bisection (α outside bracket)",
            evaluations: 2,
        });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if fraction(mid.exp())? < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        // |Δ ln ℓ| bounds the relative error in ℓ
        if hi - lo <= BISECTION_REL_TOL {
            return Ok((0.5 * (lo + hi)).exp());
        }
    }
    Err(Error::NonConvergence {
        what: "length-scale bound bisection",
        evaluations: BISECTION_MAX_ITER,
    })
}
