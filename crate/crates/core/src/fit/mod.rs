//! Maximum-likelihood hyperparameter estimation under box constraints.
//!
//! Each fit runs quasi-Newton ascent on the log marginal likelihood from
//! several starting points. Parameters live in free coordinates (log,
//! shifted log or scaled logistic) so every iterate is feasible.

mod optimizer;
mod scenario;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound::{length_scale_bound, SamplingInfo};
use crate::error::{Error, Result};
use crate::gp::{GpModel, NoiseModel, TimeSeries};
use crate::kernels::{KernelFamily, KernelSpec};

pub use optimizer::StoppingRule;
pub use scenario::{
    make_fixed_noise_scenarios, make_scenarios, LengthScaleBounds, LowerBound, NoiseMode, Scenario,
    SYNTHETIC_NOISE_BOUNDS,
};

use optimizer::{minimize, Transform};
use scenario::{ResolvedNoise, ResolvedScenario};

pub const DEFAULT_RESTARTS: usize = 5;
/// Noise threshold for the synthetic protocol.
pub const SYNTHETIC_NOISE_THRESHOLD: f64 = 1e-4;
/// Noise threshold for the expression-data protocol.
pub const EXPRESSION_NOISE_THRESHOLD: f64 = 1e-2;
/// Relative distance within which a parameter counts as sitting on its bound.
pub const ACTIVE_BOUND_TOLERANCE: f64 = 1e-6;
/// Restart optima closer than this in log likelihood are tie-broken.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Smallest signal variance used to initialize fits of constant data.
const MIN_INITIAL_VARIANCE: f64 = 1e-6;
/// Distance (relative) from a bound within which snapping onto it is tried.
const SNAP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub signal_variance: f64,
    pub length_scale: f64,
    /// `None` under fixed noise.
    pub noise_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub stopping: StoppingRule,
    /// Extra starting points tried before the random ones.
    pub warm_starts: Vec<Hyperparameters>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: DEFAULT_RESTARTS,
            stopping: StoppingRule::default(),
            warm_starts: Vec::new(),
        }
    }
}

/// Estimated noise variance, or a marker for known per-point variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseEstimate {
    Estimated(f64),
    Fixed,
}

impl NoiseEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            NoiseEstimate::Estimated(v) => Some(*v),
            NoiseEstimate::Fixed => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveBounds {
    pub length_scale: bool,
    pub noise_variance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kernel: KernelSpec,
    pub noise_variance: NoiseEstimate,
    pub log_marginal_likelihood: f64,
    /// Which parameters sit on their (positive) lower bound.
    pub bound_lower_active: ActiveBounds,
    /// Lower end of the length-scale interval actually used.
    pub length_scale_lower: f64,
    /// Starts that produced an optimum.
    pub restarts_used: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            signal_variance: self.kernel.signal_variance,
            length_scale: self.kernel.length_scale,
            noise_variance: self.noise_variance.value(),
        }
    }

    /// Noise model to condition a GP on with the fitted parameters.
    pub fn noise_model(&self, series: &TimeSeries) -> Result<NoiseModel> {
        match self.noise_variance {
            NoiseEstimate::Estimated(v) => Ok(NoiseModel::Estimated(v)),
            NoiseEstimate::Fixed => series
                .fixed_noise()
                .ok_or_else(|| Error::invalid(format!("series `{}` has no noise variances", series.id))),
        }
    }

    pub fn model(&self, series: &TimeSeries) -> Result<GpModel> {
        GpModel::from_series(series, self.kernel, self.noise_model(series)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticThresholds {
    pub alpha: f64,
    pub length_scale_bound: f64,
    pub noise_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `ℓ < a_ℓ`
    pub length_scale_below_bound: bool,
    /// `σ_n² < threshold`; never set under fixed noise.
    pub tiny_noise: bool,
    pub thresholds: DiagnosticThresholds,
}

/// Over-fitting flags for a fit against the Nyquist bound of `sampling`.
pub fn diagnose(result: &FitResult, sampling: &SamplingInfo, alpha: f64, noise_threshold: f64) -> Result<Diagnostics> {
    let bound = length_scale_bound(result.kernel.family, alpha, sampling.delta_t)?;
    Ok(Diagnostics {
        length_scale_below_bound: result.kernel.length_scale < bound,
        tiny_noise: matches!(result.noise_variance, NoiseEstimate::Estimated(v) if v < noise_threshold),
        thresholds: DiagnosticThresholds {
            alpha,
            length_scale_bound: bound,
            noise_threshold,
        },
    })
}

/// Fits `family` to `series` under `scenario` with the default options.
pub fn fit(series: &TimeSeries, family: KernelFamily, scenario: &Scenario, seed: u64) -> Result<FitResult> {
    fit_with_options(series, family, scenario, seed, &FitOptions::default())
}

pub fn fit_with_options(
    series: &TimeSeries,
    family: KernelFamily,
    scenario: &Scenario,
    seed: u64,
    options: &FitOptions,
) -> Result<FitResult> {
    family.validate()?;
    if series.len() < 2 {
        return Err(Error::invalid(format!(
            "series `{}` needs at least two points, has {}",
            series.id,
            series.len()
        )));
    }
    let resolved = scenario.resolve(series, family)?;
    let problem = Problem::new(series, family, &resolved);
    let starts = problem.starting_points(seed, options);
    if starts.is_empty() {
        return Err(Error::invalid("no starting points requested"));
    }

    let mut candidates = Vec::with_capacity(starts.len());
    let mut last_error = String::from("no start could be evaluated");
    for start in &starts {
        match problem.optimize(start, &options.stopping) {
            Ok(candidate) => candidates.push(candidate),
            Err(e) => last_error = e.to_string(),
        }
    }
    let used = candidates.len();
    let Some(best) = select(candidates) else {
        return Err(Error::AllStartsFailed {
            restarts: starts.len(),
            last: last_error,
        });
    };
    Ok(problem.finish(best, used))
}

/// `(σ_f², log marginal likelihood)` maximizing over the signal variance
/// with the other two parameters held fixed.
pub fn profile_signal_variance(
    series: &TimeSeries,
    family: KernelFamily,
    length_scale: f64,
    noise: &NoiseModel,
) -> Result<(f64, f64)> {
    let eval = |u: &DVector<f64>| {
        let kernel = KernelSpec::new(family, u[0].exp(), length_scale).ok()?;
        let model = GpModel::from_series(series, kernel, noise.clone()).ok()?;
        let g = model.log_marginal_likelihood_gradient();
        Some((
            -model.log_marginal_likelihood(),
            DVector::from_element(1, -g.d_log_signal_variance),
        ))
    };
    let start = DVector::from_element(1, series.value_variance().max(MIN_INITIAL_VARIANCE).ln());
    let rule = StoppingRule {
        gradient_tolerance: 1e-9,
        relative_tolerance: 1e-15,
        ..StoppingRule::default()
    };
    let m = minimize(eval, start, &rule).ok_or(Error::Factorization {
        jitter: crate::kernels::JITTER_MAX,
    })?;
    Ok((m.x[0].exp(), -m.value))
}

/// One cell of a profile likelihood surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub length_scale: f64,
    pub noise_variance: f64,
    pub signal_variance: f64,
    /// `NaN` where the model could not be evaluated.
    pub log_marginal_likelihood: f64,
}

/// Log marginal likelihood over a (ℓ, σ_n²) grid with σ_f² profiled out.
pub fn likelihood_surface(
    series: &TimeSeries,
    family: KernelFamily,
    length_scales: &[f64],
    noise_variances: &[f64],
) -> Vec<SurfacePoint> {
    let mut out = Vec::with_capacity(length_scales.len() * noise_variances.len());
    for &noise_variance in noise_variances {
        for &length_scale in length_scales {
            let profiled = NoiseModel::Estimated(noise_variance).validate(series.len()).and_then(|_| {
                profile_signal_variance(series, family, length_scale, &NoiseModel::Estimated(noise_variance))
            });
            let (signal_variance, lml) = profiled.unwrap_or((f64::NAN, f64::NAN));
            out.push(SurfacePoint {
                length_scale,
                noise_variance,
                signal_variance,
                log_marginal_likelihood: lml,
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Candidate {
    params: Hyperparameters,
    lml: f64,
    converged: bool,
}

/// Highest likelihood wins. Optima within [`TIE_TOLERANCE`] of the best go
/// to the smallest ℓ, then the smallest σ_n²; measuring every tie against the
/// best keeps the choice independent of the order the starts finished in.
fn select(candidates: Vec<Candidate>) -> Option<Candidate> {
    let top = candidates.iter().map(|c| c.lml).fold(f64::NEG_INFINITY, f64::max);
    let noise = |c: &Candidate| c.params.noise_variance.unwrap_or(0.0);
    candidates
        .into_iter()
        .filter(|c| c.lml >= top - TIE_TOLERANCE)
        .min_by(|a, b| {
            a.params
                .length_scale
                .total_cmp(&b.params.length_scale)
                .then(noise(a).total_cmp(&noise(b)))
                .then(b.lml.total_cmp(&a.lml))
        })
}

struct Problem<'a> {
    series: &'a TimeSeries,
    family: KernelFamily,
    length_scale: Transform,
    noise: Option<Transform>,
    fixed_noise: Option<NoiseModel>,
}

const SIGNAL: Transform = Transform::Log;

impl<'a> Problem<'a> {
    fn new(series: &'a TimeSeries, family: KernelFamily, resolved: &ResolvedScenario) -> Self {
        let (lo, hi) = resolved.length_scale;
        let noise = match resolved.noise {
            ResolvedNoise::Free { lo, hi } => Some(Transform::for_interval(lo, hi)),
            ResolvedNoise::Fixed(_) => None,
        };
        Problem {
            series,
            family,
            length_scale: Transform::for_interval(lo, hi),
            noise,
            fixed_noise: resolved.noise.fixed_model(),
        }
    }

    fn natural(&self, u: &DVector<f64>) -> Hyperparameters {
        Hyperparameters {
            signal_variance: SIGNAL.to_natural(u[0]),
            length_scale: self.length_scale.to_natural(u[1]),
            noise_variance: self.noise.map(|t| t.to_natural(u[2])),
        }
    }

    fn free(&self, p: &Hyperparameters) -> DVector<f64> {
        let mut u = vec![SIGNAL.to_free(p.signal_variance), self.length_scale.to_free(p.length_scale)];
        if let Some(t) = self.noise {
            u.push(t.to_free(p.noise_variance.unwrap_or(1.0)));
        }
        DVector::from_vec(u)
    }

    fn model(&self, p: &Hyperparameters) -> Result<GpModel> {
        let kernel = KernelSpec::new(self.family, p.signal_variance, p.length_scale)?;
        let noise = match (&self.fixed_noise, p.noise_variance) {
            (Some(fixed), _) => fixed.clone(),
            (None, Some(v)) => NoiseModel::Estimated(v),
            (None, None) => return Err(Error::invalid("missing noise variance")),
        };
        GpModel::from_series(self.series, kernel, noise)
    }

    /// Negative log likelihood and its gradient in free coordinates.
    fn objective(&self, u: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let p = self.natural(u);
        let model = self.model(&p).ok()?;
        let g = model.log_marginal_likelihood_gradient();
        let mut grad = vec![
            -g.d_log_signal_variance * SIGNAL.log_jacobian(u[0], p.signal_variance),
            -g.d_log_length_scale * self.length_scale.log_jacobian(u[1], p.length_scale),
        ];
        if let (Some(t), Some(d), Some(v)) = (self.noise, g.d_log_noise_variance, p.noise_variance) {
            grad.push(-d * t.log_jacobian(u[2], v));
        }
        Some((-model.log_marginal_likelihood(), DVector::from_vec(grad)))
    }

    /// Warm starts followed by `restarts` random draws from a stream seeded
    /// by `seed`, so a larger restart count only appends starts.
    fn starting_points(&self, seed: u64, options: &FitOptions) -> Vec<Hyperparameters> {
        let series = self.series;
        let var_y = series.value_variance().max(MIN_INITIAL_VARIANCE);
        let delta_t = series
            .times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let (ls_lo_bound, _) = self.length_scale.bounds();
        let ls_range = ordered((ls_lo_bound / 10.0).max(delta_t / 10.0), series.span());
        let noise_range = ordered(1e-4, var_y);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts = options.warm_starts.clone();
        for _ in 0..options.restarts {
            let ls = log_uniform(&mut rng, ls_range);
            let noise = log_uniform(&mut rng, noise_range);
            starts.push(Hyperparameters {
                signal_variance: var_y,
                length_scale: ls,
                noise_variance: Some(noise),
            });
        }
        for s in &mut starts {
            s.length_scale = self.length_scale.interior(s.length_scale);
            s.noise_variance = self.noise.map(|t| t.interior(s.noise_variance.unwrap_or(var_y.min(0.1))));
        }
        starts
    }

    fn optimize(&self, start: &Hyperparameters, rule: &StoppingRule) -> Result<Candidate> {
        let x0 = self.free(start);
        let m = minimize(|u| self.objective(u), x0, rule).ok_or_else(|| {
            Error::invalid(format!("starting point {start:?} could not be evaluated"))
        })?;
        let params = self.natural(&m.x);
        let lml = self.model(&params)?.log_marginal_likelihood();
        let candidate = Candidate {
            params,
            lml,
            converged: m.converged,
        };
        Ok(self.snap_to_bounds(candidate))
    }

    /// Moves parameters that stalled just inside a bound onto it when that
    /// does not lower the likelihood.
    fn snap_to_bounds(&self, mut c: Candidate) -> Candidate {
        let near = |v: f64, b: f64| b.is_finite() && b > 0.0 && v != b && (v - b).abs() <= SNAP_TOLERANCE * b;
        let try_params = |p: Hyperparameters, c: &mut Candidate| {
            if let Ok(lml) = self.model(&p).map(|m| m.log_marginal_likelihood()) {
                if lml >= c.lml {
                    c.params = p;
                    c.lml = lml;
                }
            }
        };
        let (lo, hi) = self.length_scale.bounds();
        for b in [lo, hi] {
            if near(c.params.length_scale, b) {
                let p = Hyperparameters { length_scale: b, ..c.params };
                try_params(p, &mut c);
            }
        }
        if let (Some(t), Some(v)) = (self.noise, c.params.noise_variance) {
            let (lo, hi) = t.bounds();
            for b in [lo, hi] {
                if near(v, b) {
                    let p = Hyperparameters {
                        noise_variance: Some(b),
                        ..c.params
                    };
                    try_params(p, &mut c);
                }
            }
        }
        c
    }

    fn finish(&self, best: Candidate, used: usize) -> FitResult {
        let p = best.params;
        let active = |v: f64, lo: f64| lo > 0.0 && (v - lo).abs() <= ACTIVE_BOUND_TOLERANCE * lo;
        let (ls_lo, _) = self.length_scale.bounds();
        FitResult {
            kernel: KernelSpec {
                family: self.family,
                signal_variance: p.signal_variance,
                length_scale: p.length_scale,
            },
            noise_variance: match p.noise_variance {
                Some(v) => NoiseEstimate::Estimated(v),
                None => NoiseEstimate::Fixed,
            },
            log_marginal_likelihood: best.lml,
            bound_lower_active: ActiveBounds {
                length_scale: active(p.length_scale, ls_lo),
                noise_variance: match (self.noise, p.noise_variance) {
                    (Some(t), Some(v)) => active(v, t.bounds().0),
                    _ => false,
                },
            },
            length_scale_lower: ls_lo,
            restarts_used: used,
            converged: best.converged,
        }
    }
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}
