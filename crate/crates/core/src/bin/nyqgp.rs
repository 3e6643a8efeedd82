//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! affecting all work.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nyqgp::bound::{length_scale_bound, sampling_info, GapRule, SamplingInfo};
use nyqgp::fit::{diagnose, fit_with_options};
use nyqgp::gp::TimeSeries;
use nyqgp::harness::{
    emit_report, fit_plotdata, ingest_csv, run_batch, run_synthetic_experiment, write_fit_records, write_plot_rows,
    Config, CsvFormat, ExperimentOutput, ScenarioSet, FITS_FILE,
};
use nyqgp::Error;

#[derive(Parser)]
#[command(name = "nyqgp", version, about = "Gaussian-process fits with Nyquist length-scale bounds")]
struct Cli {
    /// Flat key-value config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the length-scale lower bound for a sampling grid.
    Bound(BoundArgs),
    /// Fit a single series.
    Fit(FitArgs),
    /// Run the synthetic sinc experiment and write the report.
    Synth(SynthArgs),
    /// Fit every series of a CSV file under the four scenarios.
    Batch(BatchArgs),
    /// Write posterior curves of a fit for plotting.
    Plotdata(PlotArgs),
}

#[derive(Args, Default)]
struct Common {
    /// Kernel family: se, matern12, matern32, matern52 or matern:<nu>.
    #[arg(long)]
    family: Option<String>,
    /// Fraction of spectral energy below the Nyquist frequency.
    #[arg(long)]
    alpha: Option<f64>,
    /// Base seed for restart draws and synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    /// How Δt is taken from irregular times: minimum (default) or median.
    #[arg(long, value_parser = parse_gap_rule)]
    gap_rule: Option<GapRule>,
    /// Random restarts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args, Default)]
struct ScenarioArgs {
    /// One of the four scenarios (1 no bounds, 2 ℓ bounded, 3 noise bounded or fixed, 4 both).
    #[arg(long)]
    scenario: Option<usize>,
    /// Scenario family: synthetic (noise interval) or fixed (known variances).
    #[arg(long, value_parser = parse_scenario_set)]
    scenario_set: Option<ScenarioSet>,
    /// Explicit length-scale lower bound: zero, nyquist or a number.
    #[arg(long)]
    length_scale_lower: Option<String>,
    /// Explicit length-scale upper bound.
    #[arg(long)]
    length_scale_upper: Option<f64>,
    /// unconstrained, bounded or fixed.
    #[arg(long)]
    noise_mode: Option<String>,
    /// Noise variance lower edge (bounded mode).
    #[arg(long)]
    noise_lo: Option<f64>,
    /// Noise variance upper edge (bounded mode).
    #[arg(long)]
    noise_hi: Option<f64>,
}

#[derive(Args, Default)]
struct InputArgs {
    /// CSV file with one or more series.
    #[arg(long)]
    input: Option<PathBuf>,
    /// auto, long or wide.
    #[arg(long, value_parser = parse_format)]
    input_format: Option<CsvFormat>,
    /// Series to use when the file holds several.
    #[arg(long)]
    series_id: Option<String>,
    /// Inline comma-separated times (instead of --input).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    times: Option<Vec<f64>>,
    /// Inline comma-separated values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Inline comma-separated noise variances.
    #[arg(long, value_delimiter = ',')]
    variances: Option<Vec<f64>>,
    /// Subtract the series mean before fitting.
    #[arg(long)]
    center: bool,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputArgs,
    /// Sampling interval, instead of times.
    #[arg(long, conflicts_with_all = ["input", "times"])]
    delta_t: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Noise threshold for the tiny-noise flag.
    #[arg(long)]
    noise_threshold: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated numbers of points per series.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Start of the sampling interval.
    #[arg(long, allow_hyphen_values = true)]
    interval_lo: Option<f64>,
    /// End of the sampling interval.
    #[arg(long, allow_hyphen_values = true)]
    interval_hi: Option<f64>,
    /// Variance of the added observation noise.
    #[arg(long)]
    noise_variance: Option<f64>,
    /// Series per grid size.
    #[arg(long)]
    replicates: Option<usize>,
    /// Start of the evaluation grid.
    #[arg(long, allow_hyphen_values = true)]
    test_grid_lo: Option<f64>,
    /// End of the evaluation grid.
    #[arg(long, allow_hyphen_values = true)]
    test_grid_hi: Option<f64>,
    /// Points on the evaluation grid.
    #[arg(long)]
    test_grid_count: Option<usize>,
    /// Noise threshold for the tiny-noise flag.
    #[arg(long)]
    noise_threshold: Option<f64>,
    /// Log-likelihood below which a fit counts as poor.
    #[arg(long, allow_hyphen_values = true)]
    loglik_threshold: Option<f64>,
    /// Test MSE above which a fit counts as poor.
    #[arg(long)]
    mse_threshold: Option<f64>,
    /// Directory for the report files.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    /// CSV file with the series.
    #[arg(long)]
    input: Option<PathBuf>,
    /// auto, long or wide.
    #[arg(long, value_parser = parse_format)]
    input_format: Option<CsvFormat>,
    /// Scenario family: synthetic (noise interval) or fixed (known variances).
    #[arg(long, value_parser = parse_scenario_set)]
    scenario_set: Option<ScenarioSet>,
    /// Noise threshold for the tiny-noise flag.
    #[arg(long)]
    noise_threshold: Option<f64>,
    /// Subtract each series' mean before fitting.
    #[arg(long)]
    center: bool,
    /// Directory for fits and report tables.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Grid points between the first and last time.
    #[arg(long)]
    resolution: Option<usize>,
    /// Output CSV file.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_gap_rule(s: &str) -> Result<GapRule, String> {
    match s {
        "minimum" | "min" => Ok(GapRule::Minimum),
        "median" => Ok(GapRule::Median),
        _ => Err(format!("expected minimum or median, got `{s}`")),
    }
}

fn parse_scenario_set(s: &str) -> Result<ScenarioSet, String> {
    match s {
        "synthetic" => Ok(ScenarioSet::Synthetic),
        "fixed" => Ok(ScenarioSet::Fixed),
        _ => Err(format!("expected synthetic or fixed, got `{s}`")),
    }
}

fn parse_format(s: &str) -> Result<CsvFormat, String> {
    match s {
        "auto" => Ok(CsvFormat::Auto),
        "long" => Ok(CsvFormat::Long),
        "wide" => Ok(CsvFormat::Wide),
        _ => Err(format!("expected auto, long or wide, got `{s}`")),
    }
}

enum Failure {
    Usage(String),
    Core(Error),
    /// Every fit failed.
    AllFailed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = Result<T, Failure>;

impl Common {
    fn config(&self) -> Config {
        Config {
            family: self.family.clone(),
            alpha: self.alpha,
            seed: self.seed,
            gap_rule: self.gap_rule,
            restarts: self.restarts,
            parallelism: self.parallelism,
            ..Config::default()
        }
    }
}

impl ScenarioArgs {
    fn apply(&self, c: &mut Config) -> CliResult<()> {
        c.scenario = self.scenario;
        c.scenario_set = self.scenario_set;
        c.length_scale_lower = match &self.length_scale_lower {
            Some(s) => Some(s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?),
            None => None,
        };
        c.length_scale_upper = self.length_scale_upper;
        c.noise_mode = self.noise_mode.clone();
        c.noise_lo = self.noise_lo;
        c.noise_hi = self.noise_hi;
        Ok(())
    }
}

impl InputArgs {
    fn apply(&self, c: &mut Config) {
        c.input = self.input.clone();
        c.input_format = self.input_format;
        c.series_id = self.series_id.clone();
        c.center = self.center.then_some(true);
    }

    fn inline_series(&self) -> CliResult<Option<TimeSeries>> {
        match (&self.times, &self.values) {
            (None, None) => Ok(None),
            (Some(times), values) => {
                if self.input.is_some() {
                    return Err(Failure::Usage("give either --input or --times, not both".into()));
                }
                let values = values.clone().unwrap_or_else(|| vec![0.0; times.len()]);
                Ok(Some(TimeSeries::new("inline", times.clone(), values, self.variances.clone())?))
            }
            (None, Some(_)) => Err(Failure::Usage("--values needs --times".into())),
        }
    }
}

fn load_config(path: &Option<PathBuf>, flags: Config) -> CliResult<Config> {
    let base = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Ok(base.overlay(flags))
}

/// The one series a command works on, from inline flags or the input file.
fn single_series(input: &InputArgs, config: &Config) -> CliResult<TimeSeries> {
    if let Some(s) = input.inline_series()? {
        return Ok(s);
    }
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| Failure::Usage("no input: give --input or --times".into()))?;
    let mut all = ingest_csv(path, config.input_format.unwrap_or_default())?;
    match &config.series_id {
        Some(id) => all.into_iter().find(|s| &s.id == id).ok_or_else(|| {
            Failure::Core(Error::InvalidInput(format!("no series `{id}` in {}", path.display())))
        }),
        None if all.len() == 1 => Ok(all.remove(0)),
        None => Err(Failure::Usage(format!(
            "{} holds {} series; pick one with --series-id",
            path.display(),
            all.len()
        ))),
    }
}

/// Centers the series when the config asks for it, returning the removed mean.
fn maybe_center(series: TimeSeries, config: &Config) -> (TimeSeries, Option<f64>) {
    if config.center == Some(true) {
        let (centered, mean) = series.centered();
        (centered, Some(mean))
    } else {
        (series, None)
    }
}

fn note_gap_rule(rule: GapRule) {
    if rule == GapRule::Median {
        eprintln!("note: Δt from the median gap, not the minimum gap; the bound is tighter than the standard rule");
    }
}

fn run_bound(args: BoundArgs, config_path: &Option<PathBuf>) -> CliResult<()> {
    let mut flags = args.common.config();
    args.input.apply(&mut flags);
    let config = load_config(config_path, flags)?;
    let family = config.family()?;
    let alpha = config.alpha();
    let rule = config.gap_rule.unwrap_or_default();

    let (info, span): (SamplingInfo, Option<f64>) = match args.delta_t {
        Some(dt) => (SamplingInfo::from_delta_t(dt)?, None),
        None => {
            let series = single_series(&args.input, &config)?;
            (sampling_info(&series.times, rule)?, Some(series.span()))
        }
    };
    if args.delta_t.is_none() {
        note_gap_rule(rule);
    }
    let bound = length_scale_bound(family, alpha, info.delta_t)?;
    println!("family = {family}");
    println!("alpha = {alpha}");
    println!("delta_t = {}", info.delta_t);
    println!("nyquist_frequency = {}", info.nyquist_frequency);
    println!("uniform = {}", info.uniform);
    println!("length_scale_bound = {bound}");
    match span {
        Some(s) if s > bound => println!("length_scale_upper = {s}"),
        _ => println!("length_scale_upper = inf"),
    }
    Ok(())
}

fn run_fit(args: FitArgs, config_path: &Option<PathBuf>) -> CliResult<()> {
    let mut flags = args.common.config();
    args.scenario.apply(&mut flags)?;
    args.input.apply(&mut flags);
    flags.noise_threshold = args.noise_threshold;
    let config = load_config(config_path, flags)?;
    let family = config.family()?;
    let scenario = config.single_scenario()?;
    let (series, offset) = maybe_center(single_series(&args.input, &config)?, &config);
    note_gap_rule(scenario.gap_rule);

    let result = fit_with_options(&series, family, &scenario, config.seed.unwrap_or(0), &config.fit_options())?;
    let info = sampling_info(&series.times, scenario.gap_rule)?;
    let threshold = config.noise_threshold.unwrap_or(nyqgp::fit::SYNTHETIC_NOISE_THRESHOLD);
    let diag = diagnose(&result, &info, scenario.alpha, threshold)?;

    println!("series = {}", series.id);
    println!("scenario = {}", scenario.label);
    println!("family = {family}");
    println!("length_scale = {}", result.kernel.length_scale);
    println!("signal_variance = {}", result.kernel.signal_variance);
    match result.noise_variance.value() {
        Some(v) => println!("noise_variance = {v}"),
        None => println!("noise_variance = fixed"),
    }
    println!("log_marginal_likelihood = {}", result.log_marginal_likelihood);
    if let Some(m) = offset {
        println!("mean_offset = {m}");
    }
    println!("delta_t = {}", info.delta_t);
    println!("length_scale_bound = {}", diag.thresholds.length_scale_bound);
    println!("lower_active_length_scale = {}", result.bound_lower_active.length_scale);
    println!("lower_active_noise = {}", result.bound_lower_active.noise_variance);
    println!("overfit_length_scale = {}", diag.length_scale_below_bound);
    println!("tiny_noise = {}", diag.tiny_noise);
    println!("converged = {}", result.converged);
    println!("restarts_used = {}", result.restarts_used);
    Ok(())
}

fn write_outputs(out: &ExperimentOutput, dir: &PathBuf) -> CliResult<()> {
    emit_report(&out.report, dir)?;
    write_fit_records(&out.records, dir.join(FITS_FILE))?;
    let failed = out.records.iter().filter(|r| r.outcome.is_err()).count();
    eprintln!("{} fits, {failed} failed; report written to {}", out.records.len(), dir.display());
    if out.all_failed() {
        let first = out.records[0].outcome.as_ref().err().cloned().unwrap_or_default();
        return Err(Failure::AllFailed(first));
    }
    Ok(())
}

fn run_synth(args: SynthArgs, config_path: &Option<PathBuf>) -> CliResult<()> {
    let mut flags = args.common.config();
    flags.n_grid = args.n_grid;
    flags.interval_lo = args.interval_lo;
    flags.interval_hi = args.interval_hi;
    flags.noise_variance = args.noise_variance;
    flags.replicates = args.replicates;
    flags.test_grid_lo = args.test_grid_lo;
    flags.test_grid_hi = args.test_grid_hi;
    flags.test_grid_count = args.test_grid_count;
    flags.noise_threshold = args.noise_threshold;
    flags.loglik_threshold = args.loglik_threshold;
    flags.mse_threshold = args.mse_threshold;
    flags.output_dir = args.output_dir;
    let config = load_config(config_path, flags)?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Failure::Usage("synth needs --output-dir".into()))?;
    let out = run_synthetic_experiment(&config.synthetic()?, &config.n_grid(), config.family()?)?;
    write_outputs(&out, &dir)
}

fn run_batch_cmd(args: BatchArgs, config_path: &Option<PathBuf>) -> CliResult<()> {
    let mut flags = args.common.config();
    flags.input = args.input;
    flags.input_format = args.input_format;
    flags.scenario_set = args.scenario_set;
    flags.noise_threshold = args.noise_threshold;
    flags.center = args.center.then_some(true);
    flags.output_dir = args.output_dir;
    let config = load_config(config_path, flags)?;
    let input = config
        .input
        .clone()
        .ok_or_else(|| Failure::Usage("batch needs --input".into()))?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Failure::Usage("batch needs --output-dir".into()))?;
    let options = config.batch_options();
    note_gap_rule(options.gap_rule);
    let mut series = ingest_csv(&input, config.input_format.unwrap_or_default())?;
    if config.center == Some(true) {
        series = series.iter().map(|s| s.centered().0).collect();
    }
    let out = run_batch(&series, &config.scenario_set(), config.family()?, &options)?;
    write_outputs(&out.output, &dir)
}

fn run_plotdata(args: PlotArgs, config_path: &Option<PathBuf>) -> CliResult<()> {
    let mut flags = args.common.config();
    args.scenario.apply(&mut flags)?;
    args.input.apply(&mut flags);
    flags.resolution = args.resolution;
    flags.output = args.output;
    let config = load_config(config_path, flags)?;
    let output = config
        .output
        .clone()
        .ok_or_else(|| Failure::Usage("plotdata needs --output".into()))?;
    let family = config.family()?;
    let scenario = config.single_scenario()?;
    let (series, offset) = maybe_center(single_series(&args.input, &config)?, &config);
    note_gap_rule(scenario.gap_rule);
    let result = fit_with_options(&series, family, &scenario, config.seed.unwrap_or(0), &config.fit_options())?;
    let rows = fit_plotdata(&series, &result, config.resolution.unwrap_or(200))?;
    let offset = offset.unwrap_or(0.0);
    let rows: Vec<_> = rows.into_iter().map(|r| r.shifted(offset)).collect();
    write_plot_rows(&rows, &output)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Bound(a) => run_bound(a, &cli.config),
        Command::Fit(a) => run_fit(a, &cli.config),
        Command::Synth(a) => run_synth(a, &cli.config),
        Command::Batch(a) => run_batch_cmd(a, &cli.config),
        Command::Plotdata(a) => run_plotdata(a, &cli.config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::AllFailed(msg)) => {
            eprintln!("error: every fit failed; first failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            if e.is_data_error() || matches!(e, Error::Io(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
