//! Flat key-value configuration (TOML syntax, no tables).
//!
//! Every key is optional. Command-line flags fill the same structure and are
//! layered on top with [`Config::overlay`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BatchOptions, CsvFormat, SyntheticConfig, TestGrid, DEFAULT_N_GRID};
use crate::bound::{GapRule, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::fit::{FitOptions, LengthScaleBounds, LowerBound, NoiseMode, Scenario, EXPRESSION_NOISE_THRESHOLD};
use crate::kernels::KernelFamily;

/// Which four scenarios a batch run uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioSet {
    /// Noise interval `[0.01, 0.1]` in scenarios 3 and 4.
    #[default]
    Synthetic,
    /// Known per-point variances in scenarios 3 and 4.
    Fixed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub gap_rule: Option<GapRule>,
    pub restarts: Option<usize>,
    pub parallelism: Option<usize>,

    // synthetic data
    pub n_points: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub interval_lo: Option<f64>,
    pub interval_hi: Option<f64>,
    pub noise_variance: Option<f64>,
    pub replicates: Option<usize>,
    pub test_grid_lo: Option<f64>,
    pub test_grid_hi: Option<f64>,
    pub test_grid_count: Option<usize>,

    // diagnostics
    pub noise_threshold: Option<f64>,
    pub loglik_threshold: Option<f64>,
    pub mse_threshold: Option<f64>,

    // scenario selection: one of the four (1-4) or an explicit definition
    pub scenario: Option<usize>,
    pub scenario_set: Option<ScenarioSet>,
    /// `"zero"`, `"nyquist"` or a number.
    pub length_scale_lower: Option<LowerBoundSetting>,
    pub length_scale_upper: Option<f64>,
    /// `"unconstrained"`, `"bounded"` or `"fixed"`.
    pub noise_mode: Option<String>,
    pub noise_lo: Option<f64>,
    pub noise_hi: Option<f64>,

    /// Subtract each series' mean before fitting (zero-mean fits otherwise).
    pub center: Option<bool>,

    // files
    pub input: Option<PathBuf>,
    pub input_format: Option<CsvFormat>,
    pub series_id: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub resolution: Option<usize>,
}

/// Length-scale lower bound as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LowerBoundSetting {
    Value(f64),
    Named(NamedLowerBound),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedLowerBound {
    Zero,
    Nyquist,
}

impl std::str::FromStr for LowerBoundSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "none" => Ok(LowerBoundSetting::Named(NamedLowerBound::Zero)),
            "nyquist" => Ok(LowerBoundSetting::Named(NamedLowerBound::Nyquist)),
            other => other
                .parse()
                .map(LowerBoundSetting::Value)
                .map_err(|_| Error::invalid(format!("length-scale lower bound must be zero, nyquist or a number, got `{s}`"))),
        }
    }
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count() as u64),
            message: e.message().to_string(),
        })
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Config) -> Config {
        overlay_fields!(self, top;
            family, alpha, seed, gap_rule, restarts, parallelism, n_points, n_grid, interval_lo,
            interval_hi, noise_variance, replicates, test_grid_lo, test_grid_hi, test_grid_count,
            noise_threshold, loglik_threshold, mse_threshold, scenario, scenario_set,
            length_scale_lower, length_scale_upper, noise_mode, noise_lo, noise_hi, center, input,
            input_format, series_id, output_dir, output, resolution,
        );
        self
    }

    pub fn family(&self) -> Result<KernelFamily> {
        self.family.as_deref().unwrap_or("se").parse()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn n_grid(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| DEFAULT_N_GRID.to_vec())
    }

    pub fn synthetic(&self) -> Result<SyntheticConfig> {
        let d = SyntheticConfig::default();
        let config = SyntheticConfig {
            n_points: self.n_points.unwrap_or(d.n_points),
            interval: (self.interval_lo.unwrap_or(d.interval.0), self.interval_hi.unwrap_or(d.interval.1)),
            noise_variance: self.noise_variance.unwrap_or(d.noise_variance),
            replicates: self.replicates.unwrap_or(d.replicates),
            test_grid: TestGrid {
                lo: self.test_grid_lo.unwrap_or(d.test_grid.lo),
                hi: self.test_grid_hi.unwrap_or(d.test_grid.hi),
                count: self.test_grid_count.unwrap_or(d.test_grid.count),
            },
            seed: self.seed.unwrap_or(d.seed),
            alpha: self.alpha(),
            noise_threshold: self.noise_threshold.unwrap_or(d.noise_threshold),
            loglik_threshold: self.loglik_threshold.unwrap_or(d.loglik_threshold),
            mse_threshold: self.mse_threshold.unwrap_or(d.mse_threshold),
            restarts: self.restarts.unwrap_or(d.restarts),
            parallelism: self.parallelism.unwrap_or(d.parallelism),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts.unwrap_or(crate::fit::DEFAULT_RESTARTS),
            ..FitOptions::default()
        }
    }

    pub fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            alpha: self.alpha(),
            noise_threshold: self.noise_threshold.unwrap_or(EXPRESSION_NOISE_THRESHOLD),
            gap_rule: self.gap_rule.unwrap_or_default(),
            seed: self.seed.unwrap_or(0),
            fit: self.fit_options(),
            parallelism: self.parallelism.unwrap_or(0),
        }
    }

    /// The four scenarios of the selected set, templated on the Nyquist bound.
    pub fn scenario_set(&self) -> Vec<Scenario> {
        let mut set = match self.scenario_set.unwrap_or_default() {
            ScenarioSet::Synthetic => Scenario::synthetic_templates(self.alpha()),
            ScenarioSet::Fixed => Scenario::fixed_noise_templates(self.alpha()),
        };
        for s in &mut set {
            s.gap_rule = self.gap_rule.unwrap_or_default();
        }
        set.to_vec()
    }

    /// Scenario for a single fit: an explicit definition when any explicit
    /// key is set, else `scenario` (default 4) from the selected set.
    pub fn single_scenario(&self) -> Result<Scenario> {
        let explicit = self.length_scale_lower.is_some()
            || self.length_scale_upper.is_some()
            || self.noise_mode.is_some()
            || self.noise_lo.is_some()
            || self.noise_hi.is_some();
        if explicit {
            if self.scenario.is_some() {
                return Err(Error::invalid("give either a scenario number or an explicit scenario, not both"));
            }
            return self.explicit_scenario();
        }
        let k = self.scenario.unwrap_or(4);
        let set = self.scenario_set();
        set.get(k.wrapping_sub(1))
            .cloned()
            .ok_or_else(|| Error::InvalidScenario(format!("scenario must be 1-4, got {k}")))
    }

    fn explicit_scenario(&self) -> Result<Scenario> {
        let lower = match self.length_scale_lower {
            None | Some(LowerBoundSetting::Named(NamedLowerBound::Zero)) => LowerBound::Zero,
            Some(LowerBoundSetting::Named(NamedLowerBound::Nyquist)) => LowerBound::Nyquist,
            Some(LowerBoundSetting::Value(v)) => LowerBound::Value(v),
        };
        let noise_mode = match self.noise_mode.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("unconstrained") | Some("estimated") if self.noise_lo.is_none() && self.noise_hi.is_none() => {
                NoiseMode::Unconstrained
            }
            None | Some("bounded") => NoiseMode::Bounded {
                lo: self.noise_lo.unwrap_or(crate::fit::SYNTHETIC_NOISE_BOUNDS.0),
                hi: self.noise_hi.unwrap_or(crate::fit::SYNTHETIC_NOISE_BOUNDS.1),
            },
            Some("fixed") => NoiseMode::Fixed,
            Some(other) => {
                return Err(Error::InvalidScenario(format!(
                    "noise_mode must be unconstrained, bounded or fixed, got `{other}`"
                )))
            }
        };
        let mut s = Scenario::new(
            "custom",
            LengthScaleBounds {
                lower,
                upper: self.length_scale_upper,
            },
            noise_mode,
            self.alpha(),
        );
        s.gap_rule = self.gap_rule.unwrap_or_default();
        s.validate()?;
        Ok(s)
    }
}
