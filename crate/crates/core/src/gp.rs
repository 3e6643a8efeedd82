//! Exact zero-mean GP regression: marginal likelihood, its gradient, the
//! posterior at arbitrary times and the held-out metrics used to score fits.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernels::{cholesky_with_jitter, KernelSpec};

/// Predictive variances are floored here before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// One observed time series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    /// Strictly increasing.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Known per-point observation variances, if any.
    pub noise_variances: Option<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        noise_variances: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if times.len() != values.len() {
            return Err(Error::invalid(format!(
                "series `{id}`: {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("series `{id}` has non-finite entries")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "series `{id}`: times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(var) = &noise_variances {
            if var.len() != times.len() {
                return Err(Error::invalid(format!(
                    "series `{id}`: {} noise variances for {} points",
                    var.len(),
                    times.len()
                )));
            }
            if var.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!(
                    "series `{id}`: noise variances must be finite and non-negative"
                )));
            }
        }
        Ok(TimeSeries {
            id,
            times,
            values,
            noise_variances,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t_n - t_1`, or 0 for fewer than two points.
    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Population variance of the values.
    pub fn value_variance(&self) -> f64 {
        let n = self.values.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.values.iter().sum::<f64>() / n;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    /// Copy with the sample mean subtracted from the values, and that mean.
    ///
    /// Fits use a zero mean function; centering is an opt-in alternative to
    /// fitting the raw values.
    pub fn centered(&self) -> (TimeSeries, f64) {
        let mean = if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        };
        let shifted = TimeSeries {
            values: self.values.iter().map(|v| v - mean).collect(),
            ..self.clone()
        };
        (shifted, mean)
    }

    /// Fixed-noise model built from the stored per-point variances.
    pub fn fixed_noise(&self) -> Option<NoiseModel> {
        self.noise_variances.clone().map(NoiseModel::Fixed)
    }
}

/// Observation noise: a single estimated variance or known per-point variances.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Estimated(f64),
    Fixed(Vec<f64>),
}

impl NoiseModel {
    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        match self {
            NoiseModel::Estimated(v) if *v > 0.0 && v.is_finite() => Ok(()),
            NoiseModel::Estimated(v) => Err(Error::invalid(format!(
                "estimated noise variance must be positive, got {v}"
            ))),
            NoiseModel::Fixed(vs) if vs.len() != n => Err(Error::invalid(format!(
                "{} fixed noise variances for {n} points",
                vs.len()
            ))),
            NoiseModel::Fixed(vs) if vs.iter().any(|v| !(*v >= 0.0 && v.is_finite())) => Err(
                Error::invalid("fixed noise variances must be finite and non-negative"),
            ),
            NoiseModel::Fixed(_) => Ok(()),
        }
    }

    pub fn variance_at(&self, i: usize) -> f64 {
        match self {
            NoiseModel::Estimated(v) => *v,
            NoiseModel::Fixed(vs) => vs[i],
        }
    }
}

/// Posterior moments at a set of query times.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Variance of the latent function (no observation noise).
    pub variance_latent: Vec<f64>,
    /// Latent variance plus observation noise.
    pub variance_observed: Vec<f64>,
}

/// Gradient of the log marginal likelihood with respect to log-hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmlGradient {
    pub d_log_signal_variance: f64,
    pub d_log_length_scale: f64,
    /// `None` when the noise is fixed.
    pub d_log_noise_variance: Option<f64>,
}

/// A GP conditioned on a set of observations.
///
/// Works on arbitrary point sets (unordered, repeated times) so it can also
/// back property checks that a [`TimeSeries`] would reject.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    noise: NoiseModel,
    times: Vec<f64>,
    values: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn new(times: &[f64], values: &[f64], kernel: KernelSpec, noise: NoiseModel) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::invalid(format!(
                "need matching non-empty times/values, got {} and {}",
                times.len(),
                values.len()
            )));
        }
        let k = kernel.covariance_matrix(times, &noise)?;
        let (chol, jitter) = cholesky_with_jitter(&k, kernel.signal_variance)?;
        let values = DVector::from_column_slice(values);
        let alpha = chol.solve(&values);
        Ok(GpModel {
            kernel,
            noise,
            times: times.to_vec(),
            values,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn from_series(series: &TimeSeries, kernel: KernelSpec, noise: NoiseModel) -> Result<Self> {
        Self::new(&series.times, &series.values, kernel, noise)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Diagonal jitter that had to be added to factorize the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `-½ yᵀK⁻¹y - ½ log|K| - (n/2) log 2π`
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.times.len() as f64;
        let data_fit = self.values.dot(&self.alpha);
        let log_det: f64 = 2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * data_fit - 0.5 * log_det - 0.5 * n * (2.0 * PI).ln()
    }

    pub fn log_marginal_likelihood_gradient(&self) -> LmlGradient {
        let n = self.times.len();
        // W = ααᵀ - K⁻¹; dL/dθ = ½ tr(W dK/dθ)
        let mut w = self.chol.inverse();
        w.neg_mut();
        w.ger(1.0, &self.alpha, &self.alpha, 1.0);

        let mut d_signal = 0.0;
        let mut d_length = 0.0;
        for j in 0..n {
            for i in 0..n {
                let g = self.kernel.covariance_gradient(self.times[i] - self.times[j]);
                d_signal += w[(i, j)] * g.d_signal_variance * self.kernel.signal_variance;
                d_length += w[(i, j)] * g.d_length_scale * self.kernel.length_scale;
            }
        }
        // jitter scales with σ_f², so it belongs to the signal-variance direction
        d_signal += self.jitter * w.trace();

        let d_noise = match self.noise {
            NoiseModel::Estimated(v) => Some(0.5 * v * w.trace()),
            NoiseModel::Fixed(_) => None,
        };
        LmlGradient {
            d_log_signal_variance: 0.5 * d_signal,
            d_log_length_scale: 0.5 * d_length,
            d_log_noise_variance: d_noise,
        }
    }

    /// Observation-noise variance attributed to a query time.
    ///
    /// Estimated noise is homoscedastic. Fixed noise is only known at the
    /// training times; elsewhere the mean of the fixed variances is used.
    fn query_noise(&self, t: f64) -> f64 {
        match &self.noise {
            NoiseModel::Estimated(v) => *v,
            NoiseModel::Fixed(vs) => match self.times.iter().position(|&s| s == t) {
                Some(i) => vs[i],
                None => vs.iter().sum::<f64>() / vs.len() as f64,
            },
        }
    }

    pub fn posterior_at(&self, query_times: &[f64]) -> Posterior {
        let n = self.times.len();
        let prior = self.kernel.signal_variance;
        let mut mean = Vec::with_capacity(query_times.len());
        let mut latent = Vec::with_capacity(query_times.len());
        let mut observed = Vec::with_capacity(query_times.len());
        for &t in query_times {
            let k_star = DVector::from_fn(n, |i, _| self.kernel.covariance(t - self.times[i]));
            let m = k_star.dot(&self.alpha);
            let v = self.chol.l_dirty().solve_lower_triangular(&k_star).map(|v| v.norm_squared());
            let reduction = v.unwrap_or(prior);
            let var = (prior - reduction).max(0.0);
            mean.push(m);
            latent.push(var);
            observed.push(var + self.query_noise(t));
        }
        Posterior {
            times: query_times.to_vec(),
            mean,
            variance_latent: latent,
            variance_observed: observed,
        }
    }

    /// Sum of Gaussian log-densities of `test_values` under the latent posterior.
    pub fn predictive_log_likelihood(&self, test_times: &[f64], test_values: &[f64]) -> Result<f64> {
        check_test_lengths(test_times, test_values)?;
        let post = self.posterior_at(test_times);
        Ok(post
            .mean
            .iter()
            .zip(&post.variance_latent)
            .zip(test_values)
            .map(|((&m, &v), &y)| gaussian_log_density(y, m, v.max(VARIANCE_FLOOR)))
            .sum())
    }

    /// Mean squared error of the posterior mean against `true_values`.
    pub fn mse(&self, test_times: &[f64], true_values: &[f64]) -> Result<f64> {
        check_test_lengths(test_times, true_values)?;
        let post = self.posterior_at(test_times);
        let sum: f64 = post
            .mean
            .iter()
            .zip(true_values)
            .map(|(m, y)| (m - y).powi(2))
            .sum();
        Ok(sum / test_times.len() as f64)
    }
}

fn check_test_lengths(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::invalid(format!(
            "need matching non-empty test grids, got {} times and {} values",
            times.len(),
            values.len()
        )));
    }
    Ok(())
}

pub fn gaussian_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * PI * variance).ln() - 0.5 * (y - mean).powi(2) / variance
}

pub fn log_marginal_likelihood(series: &TimeSeries, kernel: KernelSpec, noise: NoiseModel) -> Result<f64> {
    Ok(GpModel::from_series(series, kernel, noise)?.log_marginal_likelihood())
}

pub fn log_marginal_likelihood_gradient(
    series: &TimeSeries,
    kernel: KernelSpec,
    noise: NoiseModel,
) -> Result<LmlGradient> {
    Ok(GpModel::from_series(series, kernel, noise)?.log_marginal_likelihood_gradient())
}

pub fn posterior_at(
    series: &TimeSeries,
    kernel: KernelSpec,
    noise: NoiseModel,
    query_times: &[f64],
) -> Result<Posterior> {
    Ok(GpModel::from_series(series, kernel, noise)?.posterior_at(query_times))
}

pub fn predictive_log_likelihood(
    series: &TimeSeries,
    kernel: KernelSpec,
    noise: NoiseModel,
    test_times: &[f64],
    test_values: &[f64],
) -> Result<f64> {
    GpModel::from_series(series, kernel, noise)?.predictive_log_likelihood(test_times, test_values)
}

pub fn mse(
    series: &TimeSeries,
    kernel: KernelSpec,
    noise: NoiseModel,
    test_times: &[f64],
    true_values: &[f64],
) -> Result<f64> {
    GpModel::from_series(series, kernel, noise)?.mse(test_times, true_values)
}

/// Dense reference evaluation used by tests: explicit inverse, no factor reuse.
#[cfg(test)]
pub(crate) fn dense_posterior(
    times: &[f64],
    values: &[f64],
    kernel: &KernelSpec,
    noise: f64,
    t: f64,
) -> (f64, f64) {
    let n = times.len();
    let k = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        kernel.covariance(times[i] - times[j]) + if i == j { noise } else { 0.0 }
    });
    let inv = k.try_inverse().unwrap();
    let ks = DVector::from_fn(n, |i, _| kernel.covariance(t - times[i]));
    let y = DVector::from_column_slice(values);
    let mean = (ks.transpose() * &inv * y)[(0, 0)];
    let var = kernel.signal_variance - (ks.transpose() * &inv * &ks)[(0, 0)];
    (mean, var)
}
