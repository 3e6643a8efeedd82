//! CSV input and output: series ingestion and export, per-fit records,
//! report tables and posterior curves for plotting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BatchReport, CellStats, FitRecord, FitSummary};
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::gp::TimeSeries;

pub const FITS_FILE: &str = "fits.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Report tables written by [`emit_report`], with their descriptions.
pub const REPORT_TABLES: [(&str, &str); 6] = [
    ("overfit_length_scale.csv", "fraction of fits with length-scale below its Nyquist bound"),
    ("overfit_noise.csv", "fraction of fits with noise variance below the threshold"),
    ("low_loglik.csv", "fraction of fits with predictive log-likelihood below the threshold"),
    ("high_mse.csv", "fraction of fits with test MSE above the threshold"),
    ("win_loglik.csv", "fraction of replicates on which the scenario has the largest predictive log-likelihood"),
    ("win_mse.csv", "fraction of replicates on which the scenario has the smallest test MSE"),
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvFormat {
    /// Long when the header has `time` and `value` columns, wide otherwise.
    #[default]
    Auto,
    /// Columns `id,time,value[,variance]`, one observation per row.
    Long,
    /// An `id` column followed by one column per time (`t=` prefix optional)
    /// and optional `var:<time>` variance columns.
    Wide,
}

/// Decimal text that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_number(path: &Path, line: u64, what: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("cannot parse {what} `{cell}`")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("{what} `{cell}` is not finite")));
    }
    Ok(v)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Reads series from a CSV file.
pub fn ingest_csv(path: impl AsRef<Path>, format: CsvFormat) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let looks_long = headers.iter().any(|h| h == "time") && headers.iter().any(|h| h == "value");
    match format {
        CsvFormat::Long => ingest_long(path, &mut reader, &headers),
        CsvFormat::Wide => ingest_wide(path, &mut reader, &headers),
        CsvFormat::Auto if looks_long => ingest_long(path, &mut reader, &headers),
        CsvFormat::Auto => ingest_wide(path, &mut reader, &headers),
    }
}

struct Accumulator {
    id: String,
    first_line: u64,
    times: Vec<f64>,
    values: Vec<f64>,
    variances: Vec<Option<f64>>,
}

impl Accumulator {
    fn finish(self, path: &Path) -> Result<TimeSeries> {
        if self.times.is_empty() {
            return Err(parse_error(path, self.first_line, format!("series `{}` has no observations", self.id)));
        }
        let variances = match self.variances.iter().filter(|v| v.is_some()).count() {
            0 => None,
            k if k == self.variances.len() => Some(self.variances.into_iter().flatten().collect()),
            _ => {
                return Err(parse_error(
                    path,
                    self.first_line,
                    format!("series `{}` has variances for some points only", self.id),
                ))
            }
        };
        TimeSeries::new(self.id, self.times, self.values, variances)
            .map_err(|e| parse_error(path, self.first_line, e.to_string()))
    }
}

fn ingest_long(path: &Path, reader: &mut csv::Reader<fs::File>, headers: &[String]) -> Result<Vec<TimeSeries>> {
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let (id_col, time_col, value_col) = (column("id")?, column("time")?, column("value")?);
    let var_col = headers.iter().position(|h| h == "variance");

    let mut series: Vec<Accumulator> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let id = record[id_col].to_string();
        let t = parse_number(path, line, "time", &record[time_col])?;
        let v = parse_number(path, line, "value", &record[value_col])?;
        let var = match var_col.map(|c| &record[c]) {
            None | Some("") => None,
            Some(cell) => Some(parse_number(path, line, "variance", cell)?),
        };
        let i = *index.entry(id.clone()).or_insert_with(|| {
            series.push(Accumulator {
                id: id.clone(),
                first_line: line,
                times: Vec::new(),
                values: Vec::new(),
                variances: Vec::new(),
            });
            series.len() - 1
        });
        let acc = &mut series[i];
        if acc.times.last().is_some_and(|&last| t <= last) {
            return Err(Error::NonMonotonic {
                path: path.to_path_buf(),
                id,
                line,
            });
        }
        acc.times.push(t);
        acc.values.push(v);
        acc.variances.push(var);
    }
    series.into_iter().map(|a| a.finish(path)).collect()
}

fn parse_time_header(path: &Path, cell: &str) -> Result<f64> {
    let text = cell.strip_prefix("t=").unwrap_or(cell);
    parse_number(path, 1, "time header", text)
}

fn ingest_wide(path: &Path, reader: &mut csv::Reader<fs::File>, headers: &[String]) -> Result<Vec<TimeSeries>> {
    if headers.first().map(String::as_str) != Some("id") {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: "id".to_string(),
        });
    }
    let mut time_cols: Vec<(usize, f64)> = Vec::new();
    let mut var_cols: Vec<(usize, f64)> = Vec::new();
    for (c, h) in headers.iter().enumerate().skip(1) {
        match h.strip_prefix("var:") {
            Some(rest) => var_cols.push((c, parse_time_header(path, rest)?)),
            None => time_cols.push((c, parse_time_header(path, h)?)),
        }
    }
    if time_cols.windows(2).any(|w| w[1].1 <= w[0].1) {
        return Err(Error::NonMonotonic {
            path: path.to_path_buf(),
            id: "<header>".to_string(),
            line: 1,
        });
    }
    // variance column for each time column, matched by time value
    let mut var_for: Vec<Option<usize>> = vec![None; time_cols.len()];
    for &(c, t) in &var_cols {
        let k = time_cols
            .iter()
            .position(|&(_, s)| s == t)
            .ok_or_else(|| parse_error(path, 1, format!("variance column for time {t} has no value column")))?;
        var_for[k] = Some(c);
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let mut acc = Accumulator {
            id: record[0].to_string(),
            first_line: line,
            times: Vec::new(),
            values: Vec::new(),
            variances: Vec::new(),
        };
        for (k, &(c, t)) in time_cols.iter().enumerate() {
            if record[c].is_empty() {
                continue;
            }
            acc.times.push(t);
            acc.values.push(parse_number(path, line, "value", &record[c])?);
            let var = match var_for[k].map(|vc| &record[vc]) {
                None | Some("") => None,
                Some(cell) => Some(parse_number(path, line, "variance", cell)?),
            };
            acc.variances.push(var);
        }
        out.push(acc.finish(path)?);
    }
    Ok(out)
}

/// Writes series in long format; a variance column is added when any
/// series carries variances.
pub fn write_long_csv(series_set: &[TimeSeries], path: impl AsRef<Path>) -> Result<()> {
    let with_variance = series_set.iter().any(|s| s.noise_variances.is_some());
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["id", "time", "value"];
    if with_variance {
        header.push("variance");
    }
    w.write_record(&header)?;
    for s in series_set {
        for i in 0..s.len() {
            let mut row = vec![s.id.clone(), fmt_f64(s.times[i]), fmt_f64(s.values[i])];
            if with_variance {
                row.push(s.noise_variances.as_ref().map_or(String::new(), |v| fmt_f64(v[i])));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Flat row of the per-fit results file.
#[derive(Debug, Serialize, Deserialize)]
struct FitRow {
    group: String,
    series_id: String,
    scenario: usize,
    scenario_label: String,
    status: String,
    length_scale: Option<f64>,
    signal_variance: Option<f64>,
    noise_variance: Option<f64>,
    log_marginal_likelihood: Option<f64>,
    length_scale_bound: Option<f64>,
    lower_active_length_scale: Option<bool>,
    lower_active_noise: Option<bool>,
    overfit_length_scale: Option<bool>,
    tiny_noise: Option<bool>,
    converged: Option<bool>,
    predictive_loglik: Option<f64>,
    mse: Option<f64>,
    error: String,
}

impl From<&FitRecord> for FitRow {
    fn from(r: &FitRecord) -> Self {
        let ok = r.outcome.as_ref().ok();
        FitRow {
            group: r.group.clone(),
            series_id: r.series_id.clone(),
            scenario: r.scenario,
            scenario_label: r.scenario_label.clone(),
            status: if ok.is_some() { "ok" } else { "failed" }.to_string(),
            length_scale: ok.map(|f| f.length_scale),
            signal_variance: ok.map(|f| f.signal_variance),
            noise_variance: ok.and_then(|f| f.noise_variance),
            log_marginal_likelihood: ok.map(|f| f.log_marginal_likelihood),
            length_scale_bound: ok.map(|f| f.length_scale_bound),
            lower_active_length_scale: ok.map(|f| f.lower_active_length_scale),
            lower_active_noise: ok.map(|f| f.lower_active_noise),
            overfit_length_scale: ok.map(|f| f.overfit_length_scale),
            tiny_noise: ok.map(|f| f.tiny_noise),
            converged: ok.map(|f| f.converged),
            predictive_loglik: ok.and_then(|f| f.predictive_loglik),
            mse: ok.and_then(|f| f.mse),
            error: r.outcome.as_ref().err().cloned().unwrap_or_default(),
        }
    }
}

impl FitRow {
    fn into_record(self, path: &Path, line: u64) -> Result<FitRecord> {
        let missing = |what: &str| parse_error(path, line, format!("missing {what} for a successful fit"));
        let outcome = match self.status.as_str() {
            "failed" => Err(self.error),
            "ok" => Ok(FitSummary {
                length_scale: self.length_scale.ok_or_else(|| missing("length_scale"))?,
                signal_variance: self.signal_variance.ok_or_else(|| missing("signal_variance"))?,
                noise_variance: self.noise_variance,
                log_marginal_likelihood: self.log_marginal_likelihood.ok_or_else(|| missing("log_marginal_likelihood"))?,
                length_scale_bound: self.length_scale_bound.ok_or_else(|| missing("length_scale_bound"))?,
                lower_active_length_scale: self.lower_active_length_scale.unwrap_or(false),
                lower_active_noise: self.lower_active_noise.unwrap_or(false),
                overfit_length_scale: self.overfit_length_scale.ok_or_else(|| missing("overfit_length_scale"))?,
                tiny_noise: self.tiny_noise.ok_or_else(|| missing("tiny_noise"))?,
                converged: self.converged.unwrap_or(false),
                predictive_loglik: self.predictive_loglik,
                mse: self.mse,
            }),
            other => return Err(parse_error(path, line, format!("unknown status `{other}`"))),
        };
        Ok(FitRecord {
            group: self.group,
            series_id: self.series_id,
            scenario: self.scenario,
            scenario_label: self.scenario_label,
            outcome,
        })
    }
}

/// Writes one row per fit (series × scenario).
pub fn write_fit_records(records: &[FitRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in records {
        w.serialize(FitRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fit_records(path: impl AsRef<Path>) -> Result<Vec<FitRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<FitRow>() {
        let row = row?;
        out.push(row.into_record(path, out.len() as u64 + 2)?);
    }
    Ok(out)
}

fn write_table(
    path: &Path,
    report: &BatchReport,
    value: impl Fn(&CellStats) -> Option<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scenario".to_string(), "label".to_string()];
    header.extend(report.groups.iter().cloned());
    w.write_record(&header)?;
    if !report.groups.is_empty() {
        for (s, label) in report.scenario_labels.iter().enumerate() {
            let mut row = vec![(s + 1).to_string(), label.clone()];
            row.extend(
                report.cells[s]
                    .iter()
                    .map(|c| value(c).map_or(String::new(), |v| format!("{v:.4}"))),
            );
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

type Extractor = fn(&CellStats) -> Option<f64>;

const TABLE_VALUES: [Extractor; 6] = [
    CellStats::overfit_fraction_length_scale,
    CellStats::overfit_fraction_noise,
    CellStats::low_loglik_fraction,
    CellStats::high_mse_fraction,
    CellStats::win_fraction_loglik,
    CellStats::win_fraction_mse,
];

/// Writes the report tables, a long-format `cells.csv` with raw counts and
/// metric summaries, and a plain-text summary. Returns the files written.
pub fn emit_report(report: &BatchReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for ((name, _), value) in REPORT_TABLES.iter().zip(TABLE_VALUES) {
        let path = dir.join(name);
        write_table(&path, report, value)?;
        written.push(path);
    }

    let cells_path = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&cells_path)?;
    w.write_record([
        "scenario", "label", "group", "fits", "failed", "overfit_length_scale", "tiny_noise", "scored",
        "low_loglik", "high_mse", "eligible", "wins_loglik", "wins_mse", "mean_loglik", "median_loglik",
        "mean_mse", "median_mse",
    ])?;
    for (s, label) in report.scenario_labels.iter().enumerate() {
        for (g, group) in report.groups.iter().enumerate() {
            let c = &report.cells[s][g];
            let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f64);
            w.write_record([
                (s + 1).to_string(),
                label.clone(),
                group.clone(),
                c.fits.to_string(),
                c.failed.to_string(),
                c.overfit_length_scale.to_string(),
                c.tiny_noise.to_string(),
                c.scored.to_string(),
                c.low_loglik.to_string(),
                c.high_mse.to_string(),
                c.eligible.to_string(),
                c.wins_loglik.to_string(),
                c.wins_mse.to_string(),
                opt(c.mean_loglik),
                opt(c.median_loglik),
                opt(c.mean_mse),
                opt(c.median_mse),
            ])?;
        }
    }
    w.flush()?;
    written.push(cells_path);

    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary_text(report))?;
    written.push(summary_path);
    Ok(written)
}

fn summary_text(report: &BatchReport) -> String {
    let t = &report.thresholds;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "alpha = {}, noise threshold = {}, log-likelihood threshold = {}, MSE threshold = {}",
        t.alpha, t.noise_threshold, t.loglik_threshold, t.mse_threshold
    );
    let width = report.scenario_labels.iter().map(|l| l.len()).max().unwrap_or(8).max(8);
    for ((name, description), value) in REPORT_TABLES.iter().zip(TABLE_VALUES) {
        let _ = writeln!(out, "\n{description} ({name}, %)");
        let _ = write!(out, "{:width$}", "");
        for g in &report.groups {
            let _ = write!(out, " {g:>7}");
        }
        out.push('\n');
        for (s, label) in report.scenario_labels.iter().enumerate() {
            let _ = write!(out, "{label:width$}");
            for c in &report.cells[s] {
                match value(c) {
                    Some(v) => {
                        let _ = write!(out, " {:>7.1}", 100.0 * v);
                    }
                    None => {
                        let _ = write!(out, " {:>7}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    let failed: usize = report.cells.iter().flatten().map(|c| c.failed).sum();
    let fits: usize = report.cells.iter().flatten().map(|c| c.fits).sum();
    let _ = writeln!(out, "\n{fits} successful fits, {failed} failed");
    out
}

/// One row of posterior plot data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub time: f64,
    pub mean: f64,
    pub latent_sd: f64,
    pub observed_sd: f64,
    pub is_training_point: bool,
    pub training_value: Option<f64>,
}

/// Posterior curve on `resolution` points over the data range, merged with
/// the training times.
pub fn fit_plotdata(series: &TimeSeries, result: &FitResult, resolution: usize) -> Result<Vec<PlotRow>> {
    if resolution < 2 {
        return Err(Error::invalid(format!("plot resolution must be at least 2, got {resolution}")));
    }
    if series.is_empty() {
        return Err(Error::invalid("cannot plot an empty series"));
    }
    let (lo, hi) = (series.times[0], series.times[series.len() - 1]);
    let mut times: Vec<(f64, Option<f64>)> = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, &v)| (t, Some(v)))
        .collect();
    for t in super::linspace(lo, hi, resolution) {
        if !series.times.contains(&t) {
            times.push((t, None));
        }
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));

    let model = result.model(series)?;
    let query: Vec<f64> = times.iter().map(|p| p.0).collect();
    let post = model.posterior_at(&query);
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &(time, training_value))| PlotRow {
            time,
            mean: post.mean[i],
            latent_sd: post.variance_latent[i].sqrt(),
            observed_sd: post.variance_observed[i].sqrt(),
            is_training_point: training_value.is_some(),
            training_value,
        })
        .collect())
}

pub fn emit_fit_plotdata(
    series: &TimeSeries,
    result: &FitResult,
    resolution: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_plot_rows(&fit_plotdata(series, result, resolution)?, path)
}

pub fn write_plot_rows(rows: &[PlotRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

impl PlotRow {
    /// Moves the mean and training value by `offset`, undoing centering.
    pub fn shifted(self, offset: f64) -> PlotRow {
        PlotRow {
            mean: self.mean + offset,
            training_value: self.training_value.map(|v| v + offset),
            ..self
        }
    }
}
