//! Python bindings: Nyquist bounds, single fits with posterior prediction,
//! the synthetic experiment and batch fitting of CSV files.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nyqgp::bound::{self, GapRule};
use nyqgp::fit::{self as core_fit, FitResult};
use nyqgp::gp::{GpModel, NoiseModel, TimeSeries as CoreSeries};
use nyqgp::harness::{self, BatchReport, Config, CsvFormat, ExperimentOutput, ScenarioSet, REPORT_TABLES};
use nyqgp::kernels::{KernelFamily, KernelSpec};
use nyqgp::Error;

fn to_py(e: Error) -> PyErr {
    if e.is_data_error() || matches!(e, Error::Io(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyArithmeticError::new_err(e.to_string())
    }
}

fn family(name: &str) -> PyResult<KernelFamily> {
    name.parse().map_err(to_py)
}

fn gap_rule(name: &str) -> PyResult<GapRule> {
    match name {
        "minimum" | "min" => Ok(GapRule::Minimum),
        "median" => Ok(GapRule::Median),
        _ => Err(PyValueError::new_err(format!("gap_rule must be minimum or median, got `{name}`"))),
    }
}

fn scenario_set(name: &str) -> PyResult<ScenarioSet> {
    match name {
        "synthetic" => Ok(ScenarioSet::Synthetic),
        "fixed" => Ok(ScenarioSet::Fixed),
        _ => Err(PyValueError::new_err(format!("scenario_set must be synthetic or fixed, got `{name}`"))),
    }
}

/// A single time series with optional known per-point noise variances.
#[pyclass(module = "pynyqgp", name = "TimeSeries", from_py_object)]
#[derive(Clone)]
struct PyTimeSeries {
    inner: CoreSeries,
}

#[pymethods]
impl PyTimeSeries {
    #[new]
    #[pyo3(signature = (times, values, variances=None, id="series".to_string()))]
    fn new(times: Vec<f64>, values: Vec<f64>, variances: Option<Vec<f64>>, id: String) -> PyResult<Self> {
        Ok(PyTimeSeries {
            inner: CoreSeries::new(id, times, values, variances).map_err(to_py)?,
        })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn variances(&self) -> Option<Vec<f64>> {
        self.inner.noise_variances.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("TimeSeries(id={:?}, n={})", self.inner.id, self.inner.len())
    }
}

/// Covariance function with fixed hyperparameters.
#[pyclass(module = "pynyqgp", name = "Kernel", frozen)]
struct PyKernel {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (family="se", signal_variance=1.0, length_scale=1.0))]
    fn new(family: &str, signal_variance: f64, length_scale: f64) -> PyResult<Self> {
        Ok(PyKernel {
            inner: KernelSpec::new(self::family(family)?, signal_variance, length_scale).map_err(to_py)?,
        })
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family.to_string()
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.inner.signal_variance
    }

    #[getter]
    fn length_scale(&self) -> f64 {
        self.inner.length_scale
    }

    fn covariance(&self, r: f64) -> f64 {
        self.inner.covariance(r)
    }

    fn spectral_density(&self, s: f64) -> f64 {
        self.inner.spectral_density(s)
    }

    fn __repr__(&self) -> String {
        format!(
            "Kernel(family={:?}, signal_variance={}, length_scale={})",
            self.inner.family.to_string(),
            self.inner.signal_variance,
            self.inner.length_scale
        )
    }
}

/// Posterior mean and variances at query times.
#[pyclass(module = "pynyqgp", name = "Posterior", frozen, get_all)]
struct PyPosterior {
    times: Vec<f64>,
    mean: Vec<f64>,
    variance_latent: Vec<f64>,
    variance_observed: Vec<f64>,
}

fn posterior_of(model: &GpModel, query: &[f64]) -> PyPosterior {
    let p = model.posterior_at(query);
    PyPosterior {
        times: p.times,
        mean: p.mean,
        variance_latent: p.variance_latent,
        variance_observed: p.variance_observed,
    }
}

/// Fitted hyperparameters together with the series they were fitted to.
#[pyclass(module = "pynyqgp", name = "FitResult", frozen)]
struct PyFitResult {
    result: FitResult,
    series: CoreSeries,
    /// Mean removed before fitting, added back to predictions.
    offset: f64,
    scenario: String,
    length_scale_bound: f64,
    overfit_length_scale: bool,
    tiny_noise: bool,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn scenario(&self) -> &str {
        &self.scenario
    }

    #[getter]
    fn length_scale(&self) -> f64 {
        self.result.kernel.length_scale
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.result.kernel.signal_variance
    }

    /// `None` when the noise was fixed by known variances.
    #[getter]
    fn noise_variance(&self) -> Option<f64> {
        self.result.noise_variance.value()
    }

    #[getter]
    fn log_marginal_likelihood(&self) -> f64 {
        self.result.log_marginal_likelihood
    }

    #[getter]
    fn length_scale_bound(&self) -> f64 {
        self.length_scale_bound
    }

    #[getter]
    fn overfit_length_scale(&self) -> bool {
        self.overfit_length_scale
    }

    #[getter]
    fn tiny_noise(&self) -> bool {
        self.tiny_noise
    }

    #[getter]
    fn converged(&self) -> bool {
        self.result.converged
    }

    #[getter]
    fn restarts_used(&self) -> usize {
        self.result.restarts_used
    }

    #[getter]
    fn kernel(&self) -> PyKernel {
        PyKernel { inner: self.result.kernel }
    }

    fn predict(&self, times: Vec<f64>) -> PyResult<PyPosterior> {
        let model = self.result.model(&self.series).map_err(to_py)?;
        let mut post = posterior_of(&model, &times);
        post.mean.iter_mut().for_each(|m| *m += self.offset);
        Ok(post)
    }

    #[getter]
    fn mean_offset(&self) -> f64 {
        self.offset
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(scenario={:?}, length_scale={}, signal_variance={}, noise_variance={:?}, log_marginal_likelihood={})",
            self.scenario,
            self.result.kernel.length_scale,
            self.result.kernel.signal_variance,
            self.result.noise_variance.value(),
            self.result.log_marginal_likelihood
        )
    }
}

/// Smallest length-scale keeping a fraction `alpha` of spectral energy
/// below the Nyquist frequency. Give either `delta_t` or `times`.
#[pyfunction]
#[pyo3(signature = (family="se", alpha=0.99, delta_t=None, times=None, gap_rule="minimum"))]
fn length_scale_bound(
    family: &str,
    alpha: f64,
    delta_t: Option<f64>,
    times: Option<Vec<f64>>,
    gap_rule: &str,
) -> PyResult<f64> {
    let dt = match (delta_t, times) {
        (Some(dt), None) => dt,
        (None, Some(t)) => bound::sampling_info(&t, self::gap_rule(gap_rule)?).map_err(to_py)?.delta_t,
        _ => return Err(PyValueError::new_err("give exactly one of delta_t and times")),
    };
    bound::length_scale_bound(self::family(family)?, alpha, dt).map_err(to_py)
}

/// Fraction of spectral energy below the Nyquist frequency `1/(2 delta_t)`.
#[pyfunction]
#[pyo3(signature = (family, length_scale, delta_t))]
fn energy_fraction(family: &str, length_scale: f64, delta_t: f64) -> PyResult<f64> {
    bound::energy_fraction(self::family(family)?, length_scale, delta_t).map_err(to_py)
}

/// Fits one series under one of the four scenarios (1 no bounds,
/// 2 length-scale bounded, 3 noise bounded or fixed, 4 both). With
/// `center`, the series mean is removed before fitting.
#[pyfunction]
#[pyo3(signature = (series, scenario=4, scenario_set="synthetic", family="se", alpha=0.99, seed=0, restarts=5, noise_threshold=None, center=false))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    series: PyTimeSeries,
    scenario: usize,
    scenario_set: &str,
    family: &str,
    alpha: f64,
    seed: u64,
    restarts: usize,
    noise_threshold: Option<f64>,
    center: bool,
) -> PyResult<PyFitResult> {
    let config = Config {
        scenario: Some(scenario),
        scenario_set: Some(self::scenario_set(scenario_set)?),
        family: Some(family.to_string()),
        alpha: Some(alpha),
        restarts: Some(restarts),
        ..Config::default()
    };
    let family = config.family().map_err(to_py)?;
    let chosen = config.single_scenario().map_err(to_py)?;
    let options = config.fit_options();
    let (series, offset) = if center { series.inner.centered() } else { (series.inner, 0.0) };
    let result = py
        .detach(|| core_fit::fit_with_options(&series, family, &chosen, seed, &options))
        .map_err(to_py)?;
    let info = bound::sampling_info(&series.times, chosen.gap_rule).map_err(to_py)?;
    let threshold = noise_threshold.unwrap_or(core_fit::SYNTHETIC_NOISE_THRESHOLD);
    let diag = core_fit::diagnose(&result, &info, chosen.alpha, threshold).map_err(to_py)?;
    Ok(PyFitResult {
        result,
        series,
        offset,
        scenario: chosen.label,
        length_scale_bound: diag.thresholds.length_scale_bound,
        overfit_length_scale: diag.length_scale_below_bound,
        tiny_noise: diag.tiny_noise,
    })
}

/// Posterior at `query` for fixed hyperparameters. Known per-point
/// variances on the series take the place of `noise_variance`.
#[pyfunction]
#[pyo3(signature = (series, query, kernel, noise_variance=None))]
fn posterior(series: PyTimeSeries, query: Vec<f64>, kernel: &PyKernel, noise_variance: Option<f64>) -> PyResult<PyPosterior> {
    let noise = match (noise_variance, series.inner.fixed_noise()) {
        (Some(v), _) => NoiseModel::Estimated(v),
        (None, Some(fixed)) => fixed,
        (None, None) => return Err(PyValueError::new_err("give noise_variance or a series with variances")),
    };
    let model = GpModel::from_series(&series.inner, kernel.inner, noise).map_err(to_py)?;
    Ok(posterior_of(&model, &query))
}

/// Report tables as `{table: {scenario label: {group: fraction}}}` plus counts.
fn report_dict<'py>(py: Python<'py>, report: &BatchReport, out: &ExperimentOutput) -> PyResult<Bound<'py, PyDict>> {
    let tables = PyDict::new(py);
    let getters: [fn(&harness::CellStats) -> Option<f64>; 6] = [
        |c| c.overfit_fraction_length_scale(),
        |c| c.overfit_fraction_noise(),
        |c| c.low_loglik_fraction(),
        |c| c.high_mse_fraction(),
        |c| c.win_fraction_loglik(),
        |c| c.win_fraction_mse(),
    ];
    for ((file, _), get) in REPORT_TABLES.iter().zip(getters) {
        let table = PyDict::new(py);
        for (s, label) in report.scenario_labels.iter().enumerate() {
            let row = PyDict::new(py);
            for (g, group) in report.groups.iter().enumerate() {
                row.set_item(group, get(&report.cells[s][g]))?;
            }
            table.set_item(label, row)?;
        }
        tables.set_item(file.trim_end_matches(".csv"), table)?;
    }
    let failed = out.records.iter().filter(|r| r.outcome.is_err()).count();
    tables.set_item("fits", out.records.len() - failed)?;
    tables.set_item("failed", failed)?;
    Ok(tables)
}

/// Runs the synthetic sinc experiment; writes the report when `output_dir`
/// is given and returns the tables as nested dicts.
#[pyfunction]
#[pyo3(signature = (n_grid=None, replicates=200, seed=0, restarts=5, family="se", alpha=0.99, parallelism=0, output_dir=None))]
#[allow(clippy::too_many_arguments)]
fn synth<'py>(
    py: Python<'py>,
    n_grid: Option<Vec<usize>>,
    replicates: usize,
    seed: u64,
    restarts: usize,
    family: &str,
    alpha: f64,
    parallelism: usize,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = harness::SyntheticConfig {
        replicates,
        seed,
        restarts,
        alpha,
        parallelism,
        ..harness::SyntheticConfig::default()
    };
    let grid = n_grid.unwrap_or_else(|| harness::DEFAULT_N_GRID.to_vec());
    let family = self::family(family)?;
    let out = py
        .detach(|| harness::run_synthetic_experiment(&config, &grid, family))
        .map_err(to_py)?;
    if let Some(dir) = output_dir {
        harness::emit_report(&out.report, &dir).map_err(to_py)?;
        harness::write_fit_records(&out.records, dir.join(harness::FITS_FILE)).map_err(to_py)?;
    }
    report_dict(py, &out.report, &out)
}

/// Reads a long or wide CSV file into series.
#[pyfunction]
#[pyo3(signature = (path, format="auto"))]
fn read_csv(path: PathBuf, format: &str) -> PyResult<Vec<PyTimeSeries>> {
    let format = match format {
        "auto" => CsvFormat::Auto,
        "long" => CsvFormat::Long,
        "wide" => CsvFormat::Wide,
        _ => return Err(PyValueError::new_err(format!("format must be auto, long or wide, got `{format}`"))),
    };
    Ok(harness::ingest_csv(path, format)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyTimeSeries { inner })
        .collect())
}

/// Fits every series under the four scenarios of `scenario_set`.
#[pyfunction]
#[pyo3(signature = (series, scenario_set="synthetic", family="se", alpha=0.99, seed=0, restarts=5, parallelism=0, output_dir=None))]
#[allow(clippy::too_many_arguments)]
fn batch<'py>(
    py: Python<'py>,
    series: Vec<PyTimeSeries>,
    scenario_set: &str,
    family: &str,
    alpha: f64,
    seed: u64,
    restarts: usize,
    parallelism: usize,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = Config {
        scenario_set: Some(self::scenario_set(scenario_set)?),
        alpha: Some(alpha),
        seed: Some(seed),
        restarts: Some(restarts),
        parallelism: Some(parallelism),
        ..Config::default()
    };
    let family = self::family(family)?;
    let set: Vec<CoreSeries> = series.into_iter().map(|s| s.inner).collect();
    let scenarios = config.scenario_set();
    let options = config.batch_options();
    let out = py
        .detach(|| harness::run_batch(&set, &scenarios, family, &options))
        .map_err(to_py)?;
    if let Some(dir) = output_dir {
        harness::emit_report(&out.output.report, &dir).map_err(to_py)?;
        harness::write_fit_records(&out.output.records, dir.join(harness::FITS_FILE)).map_err(to_py)?;
    }
    report_dict(py, &out.output.report, &out.output)
}

#[pymodule]
fn pynyqgp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(length_scale_bound, m)?)?;
    m.add_function(wrap_pyfunction!(energy_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(read_csv, m)?)?;
    m.add_function(wrap_pyfunction!(batch, m)?)?;
    Ok(())
}
