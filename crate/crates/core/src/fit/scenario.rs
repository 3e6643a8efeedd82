use serde::{Deserialize, Serialize};

use crate::bound::{sampling_info, length_scale_bound, GapRule, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::gp::{NoiseModel, TimeSeries};
use crate::kernels::KernelFamily;

/// Noise bounds used by the synthetic protocol.
pub const SYNTHETIC_NOISE_BOUNDS: (f64, f64) = (0.01, 0.1);

/// Lower end of the admissible length-scale interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowerBound {
    /// Positivity only.
    Zero,
    /// `a_ℓ(α)` computed from each series' own sampling interval at fit time.
    Nyquist,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthScaleBounds {
    pub lower: LowerBound,
    /// `None` is an open upper end.
    #[serde(default)]
    pub upper: Option<f64>,
}

impl LengthScaleBounds {
    pub const UNBOUNDED: LengthScaleBounds = LengthScaleBounds {
        lower: LowerBound::Zero,
        upper: None,
    };

    pub const NYQUIST: LengthScaleBounds = LengthScaleBounds {
        lower: LowerBound::Nyquist,
        upper: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum NoiseMode {
    Unconstrained,
    /// Closed interval `[lo, hi]`.
    Bounded { lo: f64, hi: f64 },
    /// Per-point variances taken from the series.
    Fixed,
}

/// One constraint configuration for a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub length_scale_bounds: LengthScaleBounds,
    pub noise_mode: NoiseMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub gap_rule: GapRule,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Scenario with every bound turned into a number for one series.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResolvedScenario {
    pub length_scale: (f64, f64),
    pub noise: ResolvedNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ResolvedNoise {
    Free { lo: f64, hi: f64 },
    Fixed(Vec<f64>),
}

impl Scenario {
    pub fn new(label: impl Into<String>, length_scale_bounds: LengthScaleBounds, noise_mode: NoiseMode, alpha: f64) -> Self {
        Scenario {
            label: label.into(),
            length_scale_bounds,
            noise_mode,
            alpha,
            gap_rule: GapRule::Minimum,
        }
    }

    /// Whether the length-scale has a positive lower bound.
    pub fn bounds_length_scale(&self) -> bool {
        match self.length_scale_bounds.lower {
            LowerBound::Zero => false,
            LowerBound::Nyquist => true,
            LowerBound::Value(v) => v > 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(format!("{}: {msg}", self.label)));
        if let LowerBound::Value(v) = self.length_scale_bounds.lower {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("length-scale lower bound must be finite and ≥ 0, got {v}"));
            }
        }
        if let Some(hi) = self.length_scale_bounds.upper {
            if !(hi > 0.0) {
                return bad(format!("length-scale upper bound must be positive, got {hi}"));
            }
            if let LowerBound::Value(lo) = self.length_scale_bounds.lower {
                if lo >= hi {
                    return bad(format!("empty length-scale interval [{lo}, {hi}]"));
                }
            }
        }
        if let NoiseMode::Bounded { lo, hi } = self.noise_mode {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return bad(format!("noise bounds need 0 < lo < hi < ∞, got [{lo}, {hi}]"));
            }
        }
        if matches!(self.length_scale_bounds.lower, LowerBound::Nyquist)
            && !(self.alpha > 0.0 && self.alpha < 1.0)
        {
            return bad(format!("α must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    /// Length-scale interval for one series, with the Nyquist bound evaluated.
    pub fn length_scale_interval(&self, series: &TimeSeries, family: KernelFamily) -> Result<(f64, f64)> {
        self.validate()?;
        let lower = match self.length_scale_bounds.lower {
            LowerBound::Zero => 0.0,
            LowerBound::Value(v) => v,
            LowerBound::Nyquist => {
                let info = sampling_info(&series.times, self.gap_rule)?;
                length_scale_bound(family, self.alpha, info.delta_t)?
            }
        };
        let upper = self.length_scale_bounds.upper.unwrap_or(f64::INFINITY);
        if lower >= upper {
            return Err(Error::InvalidScenario(format!(
                "{}: empty length-scale interval [{lower}, {upper}] for series `{}`",
                self.label, series.id
            )));
        }
        Ok((lower, upper))
    }

    pub(crate) fn resolve(&self, series: &TimeSeries, family: KernelFamily) -> Result<ResolvedScenario> {
        let (lower, upper) = self.length_scale_interval(series, family)?;
        let noise = match self.noise_mode {
            NoiseMode::Unconstrained => ResolvedNoise::Free {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            NoiseMode::Bounded { lo, hi } => ResolvedNoise::Free { lo, hi },
            NoiseMode::Fixed => match &series.noise_variances {
                Some(v) => ResolvedNoise::Fixed(v.clone()),
                None => {
                    return Err(Error::InvalidScenario(format!(
                        "{}: fixed noise requested but series `{}` has no variances",
                        self.label, series.id
                    )))
                }
            },
        };
        Ok(ResolvedScenario {
            length_scale: (lower, upper),
            noise,
        })
    }

    /// The four synthetic-protocol scenarios, with the Nyquist bound left to
    /// be computed per series.
    pub fn synthetic_templates(alpha: f64) -> [Scenario; 4] {
        let (lo, hi) = SYNTHETIC_NOISE_BOUNDS;
        let bounded = NoiseMode::Bounded { lo, hi };
        [
            Scenario::new("no bounds", LengthScaleBounds::UNBOUNDED, NoiseMode::Unconstrained, alpha),
            Scenario::new("l bounded", LengthScaleBounds::NYQUIST, NoiseMode::Unconstrained, alpha),
            Scenario::new("noise bounded", LengthScaleBounds::UNBOUNDED, bounded, alpha),
            Scenario::new("both bounded", LengthScaleBounds::NYQUIST, bounded, alpha),
        ]
    }

    /// The four known-noise scenarios: fixed per-point variances replace the
    /// noise interval.
    pub fn fixed_noise_templates(alpha: f64) -> [Scenario; 4] {
        [
            Scenario::new("no bounds", LengthScaleBounds::UNBOUNDED, NoiseMode::Unconstrained, alpha),
            Scenario::new("l bounded", LengthScaleBounds::NYQUIST, NoiseMode::Unconstrained, alpha),
            Scenario::new("noise fixed", LengthScaleBounds::UNBOUNDED, NoiseMode::Fixed, alpha),
            Scenario::new("both", LengthScaleBounds::NYQUIST, NoiseMode::Fixed, alpha),
        ]
    }
}

fn concretize(templates: [Scenario; 4], series: &TimeSeries, family: KernelFamily) -> Result<Vec<Scenario>> {
    templates
        .into_iter()
        .map(|mut s| {
            if s.length_scale_bounds.lower == LowerBound::Nyquist {
                let (lo, _) = s.length_scale_interval(series, family)?;
                s.length_scale_bounds.lower = LowerBound::Value(lo);
            }
            Ok(s)
        })
        .collect()
}

/// The four synthetic-protocol scenarios with `a_ℓ` computed from `series`.
pub fn make_scenarios(series: &TimeSeries, family: KernelFamily, alpha: f64) -> Result<Vec<Scenario>> {
    concretize(Scenario::synthetic_templates(alpha), series, family)
}

/// The four known-noise scenarios with `a_ℓ` computed from `series`.
pub fn make_fixed_noise_scenarios(series: &TimeSeries, family: KernelFamily, alpha: f64) -> Result<Vec<Scenario>> {
    concretize(Scenario::fixed_noise_templates(alpha), series, family)
}

impl ResolvedNoise {
    pub(crate) fn fixed_model(&self) -> Option<NoiseModel> {
        match self {
            ResolvedNoise::Fixed(v) => Some(NoiseModel::Fixed(v.clone())),
            ResolvedNoise::Free { .. } => None,
        }
    }
}
