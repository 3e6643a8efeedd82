//! Experiment engine: synthetic sinc data, scenario sweeps over many
//! replicates, batch fits of ingested series and the aggregate report.
//!
//! Work is split into independent tasks that run on a local thread pool and
//! are collected in index order, so results do not depend on the number of
//! threads.

mod config;
mod io;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{sampling_info, GapRule, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::fit::{diagnose, fit_with_options, FitOptions, FitResult, Scenario, SYNTHETIC_NOISE_THRESHOLD};
use crate::gp::TimeSeries;
use crate::kernels::KernelFamily;

pub use config::{Config, ScenarioSet};
pub use io::{
    emit_fit_plotdata, emit_report, fit_plotdata, ingest_csv, read_fit_records, write_fit_records, write_long_csv,
    write_plot_rows,
    CsvFormat, PlotRow, FITS_FILE, REPORT_TABLES, SUMMARY_FILE,
};

/// Predictive log-likelihood below which a replicate counts as poorly predicted.
pub const DEFAULT_LOGLIK_THRESHOLD: f64 = -20.0;
/// MSE above which a replicate counts as poorly predicted.
pub const DEFAULT_MSE_THRESHOLD: f64 = 0.1;
/// Metric differences below this are ties, awarded to the lowest scenario.
pub const WIN_TIE_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_N_GRID: [usize; 6] = [5, 7, 9, 11, 13, 15];

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `count` equally spaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl TestGrid {
    pub fn times(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Points per series for single-series generation.
    pub n_points: usize,
    pub interval: (f64, f64),
    pub noise_variance: f64,
    pub replicates: usize,
    pub test_grid: TestGrid,
    pub seed: u64,
    pub alpha: f64,
    pub noise_threshold: f64,
    pub loglik_threshold: f64,
    pub mse_threshold: f64,
    pub restarts: usize,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_points: 7,
            interval: (-5.0, 6.0),
            noise_variance: 0.09,
            replicates: 1000,
            test_grid: TestGrid {
                lo: -6.0,
                hi: 5.0,
                count: 10,
            },
            seed: 0,
            alpha: DEFAULT_ALPHA,
            noise_threshold: SYNTHETIC_NOISE_THRESHOLD,
            loglik_threshold: DEFAULT_LOGLIK_THRESHOLD,
            mse_threshold: DEFAULT_MSE_THRESHOLD,
            restarts: crate::fit::DEFAULT_RESTARTS,
            parallelism: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.interval;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid(format!("interval needs lo < hi, got ({lo}, {hi})")));
        }
        if self.n_points < 2 {
            return Err(Error::invalid(format!("n_points must be at least 2, got {}", self.n_points)));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be finite and ≥ 0, got {}",
                self.noise_variance
            )));
        }
        if self.replicates < 1 || self.test_grid.count < 1 {
            return Err(Error::invalid("replicates and test-grid count must be at least 1"));
        }
        if !(self.test_grid.lo <= self.test_grid.hi) {
            return Err(Error::invalid(format!(
                "test grid needs lo ≤ hi, got ({}, {})",
                self.test_grid.lo, self.test_grid.hi
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("α must lie in (0, 1), got {}", self.alpha)));
        }
        if self.restarts < 1 {
            return Err(Error::invalid("need at least one restart"));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            ..FitOptions::default()
        }
    }
}

/// Generator for one (seed, n, replicate) triple; the point index picks the stream.
fn keyed_rng(seed: u64, n: usize, replicate: usize, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(replicate as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Seed for the optimizer restarts of one replicate.
fn fit_seed(seed: u64, n: usize, replicate: usize) -> u64 {
    keyed_rng(seed, n, replicate, u64::MAX).next_u64()
}

/// One noisy sinc series with `config.n_points` points.
pub fn generate_sinc_series(config: &SyntheticConfig, replicate: usize) -> TimeSeries {
    sinc_series(config, config.n_points, replicate)
}

fn sinc_series(config: &SyntheticConfig, n: usize, replicate: usize) -> TimeSeries {
    let times = linspace(config.interval.0, config.interval.1, n);
    let sd = config.noise_variance.sqrt();
    let values = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let z: f64 = keyed_rng(config.seed, n, replicate, i as u64).sample(StandardNormal);
            sinc(t) + sd * z
        })
        .collect();
    TimeSeries {
        id: format!("n{n}_r{replicate}"),
        times,
        values,
        noise_variances: None,
    }
}

/// Per-fit numbers kept for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub length_scale: f64,
    pub signal_variance: f64,
    /// `None` under fixed noise.
    pub noise_variance: Option<f64>,
    pub log_marginal_likelihood: f64,
    /// `a_ℓ` of this series, used for the diagnostics.
    pub length_scale_bound: f64,
    pub lower_active_length_scale: bool,
    pub lower_active_noise: bool,
    pub overfit_length_scale: bool,
    pub tiny_noise: bool,
    pub converged: bool,
    pub predictive_loglik: Option<f64>,
    pub mse: Option<f64>,
}

/// One series fitted under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    /// Column of the report this fit belongs to (`n` for synthetic runs).
    pub group: String,
    pub series_id: String,
    /// 1-based.
    pub scenario: usize,
    pub scenario_label: String,
    /// `Err` holds the failure message.
    pub outcome: std::result::Result<FitSummary, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportThresholds {
    pub alpha: f64,
    pub noise_threshold: f64,
    pub loglik_threshold: f64,
    pub mse_threshold: f64,
}

/// Counts for one (scenario, group) cell; fractions are derived from them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellStats {
    /// Successful fits.
    pub fits: usize,
    pub failed: usize,
    pub overfit_length_scale: usize,
    pub tiny_noise: usize,
    /// Successful fits that were scored on a test grid.
    pub scored: usize,
    pub low_loglik: usize,
    pub high_mse: usize,
    /// Replicates on which every scenario succeeded and was scored.
    pub eligible: usize,
    pub wins_loglik: usize,
    pub wins_mse: usize,
    pub mean_loglik: Option<f64>,
    pub median_loglik: Option<f64>,
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl CellStats {
    pub fn overfit_fraction_length_scale(&self) -> Option<f64> {
        ratio(self.overfit_length_scale, self.fits)
    }

    pub fn overfit_fraction_noise(&self) -> Option<f64> {
        ratio(self.tiny_noise, self.fits)
    }

    pub fn low_loglik_fraction(&self) -> Option<f64> {
        ratio(self.low_loglik, self.scored)
    }

    pub fn high_mse_fraction(&self) -> Option<f64> {
        ratio(self.high_mse, self.scored)
    }

    pub fn win_fraction_loglik(&self) -> Option<f64> {
        ratio(self.wins_loglik, self.eligible)
    }

    pub fn win_fraction_mse(&self) -> Option<f64> {
        ratio(self.wins_mse, self.eligible)
    }
}

/// Aggregate statistics per scenario and group.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub scenario_labels: Vec<String>,
    pub groups: Vec<String>,
    /// Indexed `[scenario][group]`.
    pub cells: Vec<Vec<CellStats>>,
    pub thresholds: ReportThresholds,
}

impl BatchReport {
    pub fn cell(&self, scenario: usize, group: &str) -> Option<&CellStats> {
        let g = self.groups.iter().position(|x| x == group)?;
        self.cells.get(scenario)?.get(g)
    }

    /// Rebuilds the aggregate from per-fit records.
    pub fn from_records(
        records: &[FitRecord],
        scenario_labels: Vec<String>,
        groups: Vec<String>,
        thresholds: ReportThresholds,
    ) -> BatchReport {
        let k = scenario_labels.len();
        let mut cells = vec![vec![CellStats::default(); groups.len()]; k];
        let mut logliks = vec![vec![Vec::new(); groups.len()]; k];
        let mut mses = vec![vec![Vec::new(); groups.len()]; k];
        let group_index = |g: &str| groups.iter().position(|x| x == g);

        for r in records {
            let (Some(g), s) = (group_index(&r.group), r.scenario.wrapping_sub(1)) else {
                continue;
            };
            if s >= k {
                continue;
            }
            let cell = &mut cells[s][g];
            match &r.outcome {
                Err(_) => cell.failed += 1,
                Ok(f) => {
                    cell.fits += 1;
                    cell.overfit_length_scale += f.overfit_length_scale as usize;
                    cell.tiny_noise += f.tiny_noise as usize;
                    if let (Some(ll), Some(mse)) = (f.predictive_loglik, f.mse) {
                        cell.scored += 1;
                        cell.low_loglik += (ll < thresholds.loglik_threshold) as usize;
                        cell.high_mse += (mse > thresholds.mse_threshold) as usize;
                        logliks[s][g].push(ll);
                        mses[s][g].push(mse);
                    }
                }
            }
        }

        for (g, group) in groups.iter().enumerate() {
            for members in replicate_sets(records, group, k) {
                let scores: Option<Vec<(f64, f64)>> = members
                    .iter()
                    .map(|r| {
                        let f = r.and_then(|r| r.outcome.as_ref().ok())?;
                        Some((f.predictive_loglik?, f.mse?))
                    })
                    .collect();
                let Some(scores) = scores else { continue };
                let best_ll = winner(scores.iter().map(|s| s.0), |a, b| a > b + WIN_TIE_TOLERANCE);
                let best_mse = winner(scores.iter().map(|s| s.1), |a, b| a < b - WIN_TIE_TOLERANCE);
                for (s, row) in cells.iter_mut().enumerate() {
                    row[g].eligible += 1;
                    row[g].wins_loglik += (s == best_ll) as usize;
                    row[g].wins_mse += (s == best_mse) as usize;
                }
            }
        }

        for s in 0..k {
            for g in 0..groups.len() {
                let cell = &mut cells[s][g];
                (cell.mean_loglik, cell.median_loglik) = mean_median(&logliks[s][g]);
                (cell.mean_mse, cell.median_mse) = mean_median(&mses[s][g]);
            }
        }
        BatchReport {
            scenario_labels,
            groups,
            cells,
            thresholds,
        }
    }
}

/// Records of one group, bundled per series in order of first appearance,
/// one slot per scenario.
fn replicate_sets<'a>(records: &'a [FitRecord], group: &str, k: usize) -> Vec<Vec<Option<&'a FitRecord>>> {
    let mut order: Vec<&str> = Vec::new();
    let mut sets: Vec<Vec<Option<&FitRecord>>> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in records.iter().filter(|r| r.group == group) {
        let i = *index.entry(r.series_id.as_str()).or_insert_with(|| {
            order.push(r.series_id.as_str());
            sets.push(vec![None; k]);
            sets.len() - 1
        });
        if (1..=k).contains(&r.scenario) {
            sets[i][r.scenario - 1] = Some(r);
        }
    }
    sets
}

/// Index of the best value; later values must beat the incumbent strictly.
fn winner(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = (0, f64::NAN);
    for (i, v) in values.enumerate() {
        if i == 0 || better(v, best.1) {
            best = (i, v);
        }
    }
    best.0
}

fn mean_median(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    (Some(mean), Some(median))
}

/// Report plus the per-fit records it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: BatchReport,
    pub records: Vec<FitRecord>,
}

impl ExperimentOutput {
    /// True when there was work and every fit failed.
    pub fn all_failed(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.outcome.is_err())
    }
}

fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker threads: {e}")))
}

struct Scoring<'a> {
    alpha: f64,
    noise_threshold: f64,
    gap_rule: GapRule,
    /// Test times with the true function values there.
    test: Option<(&'a [f64], &'a [f64])>,
}

fn summarize(series: &TimeSeries, result: Result<FitResult>, scoring: &Scoring<'_>) -> std::result::Result<FitSummary, String> {
    let result = result.map_err(|e| e.to_string())?;
    let info = sampling_info(&series.times, scoring.gap_rule).map_err(|e| e.to_string())?;
    let diag = diagnose(&result, &info, scoring.alpha, scoring.noise_threshold).map_err(|e| e.to_string())?;
    let (predictive_loglik, mse) = match scoring.test {
        Some((times, truth)) => {
            let model = result.model(series).map_err(|e| e.to_string())?;
            (
                Some(model.predictive_log_likelihood(times, truth).map_err(|e| e.to_string())?),
                Some(model.mse(times, truth).map_err(|e| e.to_string())?),
            )
        }
        None => (None, None),
    };
    Ok(FitSummary {
        length_scale: result.kernel.length_scale,
        signal_variance: result.kernel.signal_variance,
        noise_variance: result.noise_variance.value(),
        log_marginal_likelihood: result.log_marginal_likelihood,
        length_scale_bound: diag.thresholds.length_scale_bound,
        lower_active_length_scale: result.bound_lower_active.length_scale,
        lower_active_noise: result.bound_lower_active.noise_variance,
        overfit_length_scale: diag.length_scale_below_bound,
        tiny_noise: diag.tiny_noise,
        converged: result.converged,
        predictive_loglik,
        mse,
    })
}

/// Fits every replicate for every `n` under the four synthetic scenarios.
///
/// All scenarios of one replicate see the same series. Failed fits are
/// recorded and counted, never fatal.
pub fn run_synthetic_experiment(
    config: &SyntheticConfig,
    n_grid: &[usize],
    family: KernelFamily,
) -> Result<ExperimentOutput> {
    config.validate()?;
    family.validate()?;
    if let Some(n) = n_grid.iter().find(|&&n| n < 2) {
        return Err(Error::invalid(format!("every n must be at least 2, got {n}")));
    }
    let scenarios = Scenario::synthetic_templates(config.alpha);
    let test_times = config.test_grid.times();
    let truth: Vec<f64> = test_times.iter().map(|&t| sinc(t)).collect();
    let scoring = Scoring {
        alpha: config.alpha,
        noise_threshold: config.noise_threshold,
        gap_rule: GapRule::Minimum,
        test: Some((&test_times, &truth)),
    };
    let options = config.fit_options();
    let tasks: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();

    let per_task: Vec<Vec<FitRecord>> = thread_pool(config.parallelism)?.install(|| {
        tasks
            .par_iter()
            .map(|&(n, replicate)| {
                let series = sinc_series(config, n, replicate);
                let seed = fit_seed(config.seed, n, replicate);
                scenarios
                    .iter()
                    .enumerate()
                    .map(|(s, scenario)| FitRecord {
                        group: n.to_string(),
                        series_id: series.id.clone(),
                        scenario: s + 1,
                        scenario_label: scenario.label.clone(),
                        outcome: summarize(&series, fit_with_options(&series, family, scenario, seed, &options), &scoring),
                    })
                    .collect()
            })
            .collect()
    });
    let records: Vec<FitRecord> = per_task.into_iter().flatten().collect();
    let report = BatchReport::from_records(
        &records,
        scenarios.iter().map(|s| s.label.clone()).collect(),
        n_grid.iter().map(|n| n.to_string()).collect(),
        ReportThresholds {
            alpha: config.alpha,
            noise_threshold: config.noise_threshold,
            loglik_threshold: config.loglik_threshold,
            mse_threshold: config.mse_threshold,
        },
    );
    Ok(ExperimentOutput { report, records })
}

/// Settings for fitting a set of ingested series.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub alpha: f64,
    pub noise_threshold: f64,
    pub gap_rule: GapRule,
    pub seed: u64,
    pub fit: FitOptions,
    pub parallelism: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            alpha: DEFAULT_ALPHA,
            noise_threshold: crate::fit::EXPRESSION_NOISE_THRESHOLD,
            gap_rule: GapRule::Minimum,
            seed: 0,
            fit: FitOptions::default(),
            parallelism: 0,
        }
    }
}

/// Group label used for every series of a batch run.
pub const BATCH_GROUP: &str = "all";

/// Results of a batch run: the report, the records and the raw fits.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub output: ExperimentOutput,
    /// `[series][scenario]`, in input order.
    pub fits: Vec<Vec<std::result::Result<FitResult, String>>>,
}

/// Fits every series under every scenario with the same seed, so a series'
/// results do not depend on what else is in the batch.
pub fn run_batch(
    series_set: &[TimeSeries],
    scenarios: &[Scenario],
    family: KernelFamily,
    options: &BatchOptions,
) -> Result<BatchOutput> {
    if series_set.is_empty() {
        return Err(Error::invalid("batch has no series"));
    }
    if scenarios.is_empty() {
        return Err(Error::invalid("batch has no scenarios"));
    }
    family.validate()?;
    for s in scenarios {
        s.validate()?;
    }
    let scoring = Scoring {
        alpha: options.alpha,
        noise_threshold: options.noise_threshold,
        gap_rule: options.gap_rule,
        test: None,
    };
    let tasks: Vec<(usize, usize)> = (0..series_set.len())
        .flat_map(|i| (0..scenarios.len()).map(move |s| (i, s)))
        .collect();
    let results: Vec<(FitRecord, std::result::Result<FitResult, String>)> =
        thread_pool(options.parallelism)?.install(|| {
            tasks
                .par_iter()
                .map(|&(i, s)| {
                    let series = &series_set[i];
                    let fitted = fit_with_options(series, family, &scenarios[s], options.seed, &options.fit);
                    let raw = fitted.as_ref().map(Clone::clone).map_err(|e| e.to_string());
                    let record = FitRecord {
                        group: BATCH_GROUP.to_string(),
                        series_id: series.id.clone(),
                        scenario: s + 1,
                        scenario_label: scenarios[s].label.clone(),
                        outcome: summarize(series, fitted, &scoring),
                    };
                    (record, raw)
                })
                .collect()
        });

    let mut records = Vec::with_capacity(results.len());
    let mut fits = vec![Vec::with_capacity(scenarios.len()); series_set.len()];
    for ((i, _), (record, raw)) in tasks.iter().zip(results) {
        records.push(record);
        fits[*i].push(raw);
    }
    let report = BatchReport::from_records(
        &records,
        scenarios.iter().map(|s| s.label.clone()).collect(),
        vec![BATCH_GROUP.to_string()],
        ReportThresholds {
            alpha: options.alpha,
            noise_threshold: options.noise_threshold,
            loglik_threshold: DEFAULT_LOGLIK_THRESHOLD,
            mse_threshold: DEFAULT_MSE_THRESHOLD,
        },
    );
    Ok(BatchOutput {
        output: ExperimentOutput { report, records },
        fits,
    })
}
