//! Per-command TOML configurations. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use mfbvar::analysis::DatingRules;
use mfbvar::eval::ExerciseConfig;
use mfbvar::mfvar::ModelSpec;
use mfbvar::simulate::DgpConfig;
use mfbvar::{Month, Quarter};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Panel and schema files plus an optional release calendar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub panel: PathBuf,
    pub schema: PathBuf,
    /// `series_id,release_lag_months`; taken from the schema when absent.
    #[serde(default)]
    pub calendar: Option<PathBuf>,
    /// `series_id,month,last_period` exceptions to the calendar lags.
    #[serde(default)]
    pub overrides: Option<PathBuf>,
    /// Truncates the panel to what was observable at the end of this month.
    #[serde(default)]
    pub as_of: Option<Month>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub data: DataFiles,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NowcastTarget {
    pub series: String,
    pub quarter: Quarter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NowcastConfig {
    pub data: DataFiles,
    pub model: ModelSpec,
    pub targets: Vec<NowcastTarget>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub data: DataFiles,
    pub model: ModelSpec,
    /// Tried in order; a target is scored against the first that contains it.
    pub benchmarks: Vec<ModelSpec>,
    pub exercise: ExerciseConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectednessConfig {
    /// Parameter draws written by `estimate`; the model is estimated from
    /// `data` and `model` when absent.
    #[serde(default)]
    pub parameters: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataFiles>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    pub horizons: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub window: usize,
    pub min_phase: usize,
    pub min_cycle: usize,
}

impl Default for RulesConfig {
    fn default() -> Self {
        let r = DatingRules::default();
        Self {
            window: r.window,
            min_phase: r.min_phase,
            min_cycle: r.min_cycle,
        }
    }
}

impl From<RulesConfig> for DatingRules {
    fn from(r: RulesConfig) -> Self {
        DatingRules {
            window: r.window,
            min_phase: r.min_phase,
            min_cycle: r.min_cycle,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateCyclesConfig {
    /// Draw dump (`draw,series,month,value`) of monthly growth in percent.
    pub draws: PathBuf,
    /// Series to date; every series in the dump when empty.
    #[serde(default)]
    pub series: Vec<String>,
    /// Date quarter-on-quarter growth instead of month-on-month.
    #[serde(default)]
    pub quarterly: bool,
    #[serde(default)]
    pub rules: RulesConfig,
}

pub fn parse<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_dgp(text: &str, path: &Path) -> Result<DgpConfig, CliError> {
    let cfg: DgpConfig = parse(text, path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl DataFiles {
    pub fn resolve(&mut self, base: &Path) {
        resolve(base, &mut self.panel);
        resolve(base, &mut self.schema);
        if let Some(p) = &mut self.calendar {
            resolve(base, p);
        }
        if let Some(p) = &mut self.overrides {
            resolve(base, p);
        }
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        let mut v = vec![self.panel.clone(), self.schema.clone()];
        v.extend(self.calendar.clone());
        v.extend(self.overrides.clone());
        v
    }
}

impl ConnectednessConfig {
    pub fn resolve(&mut self, base: &Path) {
        if let Some(p) = &mut self.parameters {
            resolve(base, p);
        }
        if let Some(d) = &mut self.data {
            d.resolve(base);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(CliError::Config("horizons must be a non-empty list of positive integers".into()));
        }
        match (&self.parameters, &self.data, &self.model) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => Ok(()),
            _ => Err(CliError::Config(
                "give either `parameters` or both `data` and `model`".into(),
            )),
        }
    }
}

impl DateCyclesConfig {
    pub fn resolve(&mut self, base: &Path) {
        resolve(base, &mut self.draws);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let r = self.rules;
        if r.window == 0 || r.min_phase == 0 || r.min_cycle < r.min_phase {
            return Err(CliError::Config(
                "dating rules need positive window and phase, and cycle >= phase".into(),
            ));
        }
        Ok(())
    }
}
