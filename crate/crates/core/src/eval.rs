//! Forecast scoring and the recursive pseudo-real-time exercise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mfvar::{estimate, freeze_parameters, nowcast, resmooth, FreezePolicy, ModelSpec, PosteriorDrawSet};
use crate::panel::{truncate_to_vintage, MixedFrequencyPanel, ReleaseCalendar};
use crate::time::{Month, Quarter};

/// Root mean squared error over the pairs not flagged in `excluded`
/// (an empty mask excludes nothing).
pub fn rmse(forecasts: &[f64], outturns: &[f64], excluded: &[bool]) -> Result<f64> {
    if forecasts.len() != outturns.len() || (!excluded.is_empty() && excluded.len() != forecasts.len()) {
        return Err(Error::Dimension("forecasts, outturns and mask must align".into()));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for (i, (f, y)) in forecasts.iter().zip(outturns).enumerate() {
        if excluded.get(i).copied().unwrap_or(false) {
            continue;
        }
        sse += (f - y).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("no pairs left to score".into()));
    }
    Ok((sse / n as f64).sqrt())
}

/// Sample CRPS: `E|X - y| - E|X - X'| / 2` with the unbiased pairwise term.
pub fn crps_from_sample(sample: &[f64], outturn: f64) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if sample.iter().any(|v| !v.is_finite()) || !outturn.is_finite() {
        return Err(Error::NonFinite("predictive sample".into()));
    }
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let abs_dev = x.iter().map(|v| (v - outturn).abs()).sum::<f64>() / n as f64;
    // Sum over i < j of x_(j) - x_(i).
    let pair_sum: f64 = x
        .iter()
        .enumerate()
        .map(|(j, v)| v * (2.0 * j as f64 - (n - 1) as f64))
        .sum();
    let half_spread = pair_sum / (n * (n - 1)) as f64;
    Ok((abs_dev - half_spread).max(0.0))
}

pub const MIN_LOG_SCORE_SAMPLE: usize = 10;

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let sd = (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let h = p * (n - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        x[lo] + (h - lo as f64) * (x[hi] - x[lo])
    };
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput("zero bandwidth: predictive sample is constant".into()));
    }
    Ok(h)
}

/// Log of a Gaussian kernel density estimate at the outturn.
pub fn log_score(sample: &[f64], outturn: f64) -> Result<f64> {
    if sample.len() < MIN_LOG_SCORE_SAMPLE {
        return Err(Error::TooShort {
            needed: MIN_LOG_SCORE_SAMPLE,
            got: sample.len(),
        });
    }
    let h = silverman_bandwidth(sample)?;
    let logs: Vec<f64> = sample.iter().map(|x| -0.5 * ((outturn - x) / h).powi(2)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    Ok(max + (sum / sample.len() as f64).ln() - h.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// Timing of a forecast relative to its target quarter: nowcasts made in
/// months 1-3 of the quarter, estimates in months 1-2 of the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InfoSet {
    M1,
    M2,
    M3,
    E1,
    E2,
}

impl InfoSet {
    pub const ALL: [InfoSet; 5] = [InfoSet::M1, InfoSet::M2, InfoSet::M3, InfoSet::E1, InfoSet::E2];

    pub fn as_str(self) -> &'static str {
        match self {
            InfoSet::M1 => "m1",
            InfoSet::M2 => "m2",
            InfoSet::M3 => "m3",
            InfoSet::E1 => "e1",
            InfoSet::E2 => "e2",
        }
    }

    /// Forecasts due at the end of `month`.
    pub fn due(month: Month) -> Vec<(InfoSet, Quarter)> {
        let q = month.quarter();
        match month.month_in_quarter() {
            1 => vec![(InfoSet::M1, q), (InfoSet::E1, q.prev())],
            2 => vec![(InfoSet::M2, q), (InfoSet::E2, q.prev())],
            _ => vec![(InfoSet::M3, q)],
        }
    }
}

impl fmt::Display for InfoSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InfoSet::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown information set `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Rmse,
    Crps,
    LogScore,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Crps => "crps",
            Metric::LogScore => "log_score",
        }
    }
}

/// One scored predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub series: String,
    pub info_set: InfoSet,
    pub quarter: Quarter,
    pub made_in: Month,
    pub sample: Vec<f64>,
}

impl Forecast {
    pub fn mean(&self) -> f64 {
        self.sample.iter().sum::<f64>() / self.sample.len() as f64
    }
}

pub const AVERAGE_ROW: &str = "AVG";

/// Metric values keyed by series and information set; the `AVG` series is
/// the equal-weighted average across series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub values: BTreeMap<(String, InfoSet, Metric), f64>,
    pub scored: BTreeMap<(String, InfoSet), usize>,
    pub excluded: Vec<Quarter>,
}

impl ScoreReport {
    pub fn get(&self, series: &str, info_set: InfoSet, metric: Metric) -> Option<f64> {
        self.values.get(&(series.to_string(), info_set, metric)).copied()
    }

    /// Scores forecasts against outturns; quarters in `excluded` are dropped
    /// from every metric.
    pub fn score(forecasts: &[Forecast], outturns: &BTreeMap<(String, Quarter), f64>, excluded: &[Quarter]) -> Result<Self> {
        let mut groups: BTreeMap<(String, InfoSet), Vec<(&Forecast, f64)>> = BTreeMap::new();
        for f in forecasts {
            if excluded.contains(&f.quarter) {
                continue;
            }
            if let Some(y) = outturns.get(&(f.series.clone(), f.quarter)) {
                groups.entry((f.series.clone(), f.info_set)).or_default().push((f, *y));
            }
        }
        let mut report = ScoreReport {
            excluded: excluded.to_vec(),
            ..Self::default()
        };
        for ((series, info), pairs) in &groups {
            let means: Vec<f64> = pairs.iter().map(|(f, _)| f.mean()).collect();
            let ys: Vec<f64> = pairs.iter().map(|(_, y)| *y).collect();
            let n = pairs.len() as f64;
            let mut crps = 0.0;
            let mut ls = 0.0;
            for (f, y) in pairs {
                crps += crps_from_sample(&f.sample, *y)?;
                ls += log_score(&f.sample, *y)?;
            }
            report
                .values
                .insert((series.clone(), *info, Metric::Rmse), rmse(&means, &ys, &[])?);
            report.values.insert((series.clone(), *info, Metric::Crps), crps / n);
            report.values.insert((series.clone(), *info, Metric::LogScore), ls / n);
            report.scored.insert((series.clone(), *info), pairs.len());
        }
        report.add_average();
        Ok(report)
    }

    fn add_average(&mut self) {
        let mut acc: BTreeMap<(InfoSet, Metric), (f64, usize)> = BTreeMap::new();
        for ((series, info, metric), v) in &self.values {
            if series == AVERAGE_ROW {
                continue;
            }
            let e = acc.entry((*info, *metric)).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        for ((info, metric), (sum, n)) in acc {
            self.values
                .insert((AVERAGE_ROW.to_string(), info, metric), sum / n as f64);
        }
    }

    /// Ratio `self / benchmark` of RMSE and CRPS per series, information
    /// set and metric present in both; averages are the mean of the
    /// per-series ratios.
    pub fn ratios(&self, benchmark: &ScoreReport) -> ScoreReport {
        let mut out = ScoreReport {
            excluded: self.excluded.clone(),
            ..Self::default()
        };
        for ((series, info, metric), v) in &self.values {
            if series == AVERAGE_ROW || *metric == Metric::LogScore {
                continue;
            }
            if let Some(b) = benchmark.values.get(&(series.clone(), *info, *metric)) {
                out.values.insert((series.clone(), *info, *metric), v / b);
            }
        }
        out.add_average();
        out
    }

    /// `series,info_set,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["series", "info_set", "metric", "value"])?;
        for ((series, info, metric), v) in &self.values {
            wtr.write_record([series.as_str(), info.as_str(), metric.as_str(), &format!("{v:e}")])?;
        }
        wtr.flush().map_err(|e| Error::io("<score csv>", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeWindow {
    pub from: Month,
    pub to: Month,
}

/// Exercise settings: scheduled vintage months, target series, quarters
/// dropped from scoring and windows with frozen parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExerciseConfig {
    pub schedule: Vec<Month>,
    pub targets: Vec<String>,
    #[serde(default)]
    pub exclusions: Vec<Quarter>,
    #[serde(default)]
    pub freeze: Vec<FreezeWindow>,
}

impl ExerciseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("schedule is empty".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("schedule months must be strictly increasing".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("no target series".into()));
        }
        for w in &self.freeze {
            if w.to < w.from {
                return Err(Error::Config(format!("freeze window {}..{} is reversed", w.from, w.to)));
            }
        }
        Ok(())
    }

    fn window_of(&self, month: Month) -> Option<&FreezeWindow> {
        self.freeze.iter().find(|w| w.from <= month && month < w.to)
    }
}

/// Source of real-time data: explicit vintages where supplied, otherwise
/// the outturn panel truncated by the release calendar.
#[derive(Debug, Clone)]
pub struct Vintages {
    pub outturn: MixedFrequencyPanel,
    pub calendar: ReleaseCalendar,
    pub explicit: BTreeMap<Month, MixedFrequencyPanel>,
}

impl Vintages {
    pub fn from_calendar(outturn: MixedFrequencyPanel, calendar: ReleaseCalendar) -> Self {
        Self {
            outturn,
            calendar,
            explicit: BTreeMap::new(),
        }
    }

    pub fn at(&self, as_of: Month) -> Result<MixedFrequencyPanel> {
        match self.explicit.get(&as_of) {
            Some(p) => Ok(p.clone()),
            None => truncate_to_vintage(&self.outturn, &self.calendar, as_of),
        }
    }

    /// Observed quarterly outturns of `series` in the outturn panel.
    pub fn outturns(&self, series: &[String]) -> Result<BTreeMap<(String, Quarter), f64>> {
        let mut out = BTreeMap::new();
        for id in series {
            let s = self.outturn.require(id)?;
            for (t, v) in s.values.iter().enumerate() {
                let m = self.outturn.month_at(t);
                if let (Some(v), true) = (v, m.is_quarter_end()) {
                    out.insert((id.clone(), m.quarter()), *v);
                }
            }
        }
        Ok(out)
    }
}

/// Forecasts and scores of the full model and the benchmark.
#[derive(Debug, Clone)]
pub struct ExerciseOutcome {
    pub full_forecasts: Vec<Forecast>,
    pub benchmark_forecasts: Vec<Forecast>,
    pub full: ScoreReport,
    pub benchmark: ScoreReport,
    pub ratios: ScoreReport,
}

/// Per-model state of the exercise across scheduled months.
struct ModelRun<'a> {
    spec: &'a ModelSpec,
    targets: Vec<String>,
    frozen: Option<(Month, FreezePolicy)>,
}

impl ModelRun<'_> {
    fn forecasts(
        &mut self,
        vintages: &Vintages,
        config: &ExerciseConfig,
        as_of: Month,
        seed: u64,
    ) -> Result<Vec<Forecast>> {
        let panel = vintages.at(as_of)?;
        let mut spec = self.spec.clone();
        spec.seed = seed;
        let draws: PosteriorDrawSet = match config.window_of(as_of) {
            Some(w) => {
                if self.frozen.as_ref().map(|(from, _)| *from) != Some(w.from) {
                    let before = vintages.at(w.from.offset(-1))?;
                    let est = estimate(&before, &spec)?;
                    self.frozen = Some((w.from, freeze_parameters(&est, (w.from, w.to))?));
                }
                let policy = &self.frozen.as_ref().expect("set above").1;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                resmooth(&panel, &spec, &policy.parameters, &mut rng)?
            }
            None => estimate(&panel, &spec)?,
        };
        let mut wanted = Vec::new();
        let mut labels = Vec::new();
        for (info, quarter) in InfoSet::due(as_of) {
            for id in &self.targets {
                let end = quarter.end_month();
                let observed = panel
                    .index_of(end)
                    .map(|t| panel.require(id).map(|s| s.values[t].is_some()))
                    .transpose()?
                    .unwrap_or(false);
                if observed || end.since(panel.start()) < 4 {
                    continue;
                }
                wanted.push((id.clone(), quarter));
                labels.push(info);
            }
        }
        if wanted.is_empty() {
            return Ok(Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let dist = nowcast(&panel, &spec, &draws, &wanted, &mut rng)?;
        Ok(dist
            .samples
            .into_iter()
            .zip(labels)
            .map(|(s, info_set)| Forecast {
                series: s.series,
                info_set,
                quarter: s.quarter,
                made_in: as_of,
                sample: s.values,
            })
            .collect())
    }
}

fn vintage_seed(base: u64, month: Month) -> u64 {
    base ^ (month.since(Month::new(0, 1)) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Re-estimates the full model and the benchmark at every scheduled month
/// and scores their nowcasts and estimates against the outturn panel. The
/// benchmark for a target is the first of `benchmarks` that contains it.
pub fn run_recursive_exercise(
    vintages: &Vintages,
    spec: &ModelSpec,
    benchmarks: &[ModelSpec],
    config: &ExerciseConfig,
) -> Result<ExerciseOutcome> {
    config.validate()?;
    let min_draws = MIN_LOG_SCORE_SAMPLE;
    for s in std::iter::once(spec).chain(benchmarks) {
        if s.mcmc.retained < min_draws {
            return Err(Error::Config(format!(
                "scoring needs at least {min_draws} retained draws per model"
            )));
        }
    }
    for id in &config.targets {
        if !spec.variables.contains(id) {
            return Err(Error::Config(format!("target `{id}` is not in the full model")));
        }
    }
    let mut full = ModelRun {
        spec,
        targets: config.targets.clone(),
        frozen: None,
    };
    let mut bench_runs: Vec<ModelRun> = Vec::new();
    let mut assigned = BTreeSet::new();
    for b in benchmarks {
        let mine: Vec<String> = config
            .targets
            .iter()
            .filter(|t| b.variables.contains(t) && !assigned.contains(*t))
            .cloned()
            .collect();
        assigned.extend(mine.iter().cloned());
        if !mine.is_empty() {
            bench_runs.push(ModelRun {
                spec: b,
                targets: mine,
                frozen: None,
            });
        }
    }
    if let Some(t) = config.targets.iter().find(|t| !assigned.contains(*t)) {
        return Err(Error::Config(format!("no benchmark model contains target `{t}`")));
    }

    let mut full_forecasts = Vec::new();
    let mut benchmark_forecasts = Vec::new();
    for &as_of in &config.schedule {
        let seed = vintage_seed(spec.seed, as_of);
        let wrap = |e: Error| Error::VintageFailed {
            month: as_of.to_string(),
            source: Box::new(e),
        };
        full_forecasts.extend(full.forecasts(vintages, config, as_of, seed).map_err(wrap)?);
        for run in &mut bench_runs {
            benchmark_forecasts.extend(run.forecasts(vintages, config, as_of, seed).map_err(wrap)?);
        }
    }
    let outturns = vintages.outturns(&config.targets)?;
    let full_report = ScoreReport::score(&full_forecasts, &outturns, &config.exclusions)?;
    let bench_report = ScoreReport::score(&benchmark_forecasts, &outturns, &config.exclusions)?;
    let ratios = full_report.ratios(&bench_report);
    Ok(ExerciseOutcome {
        full_forecasts,
        benchmark_forecasts,
        full: full_report,
        benchmark: bench_report,
        ratios,
    })
}

/// `series,info_set,quarter,made_in,mean,draws` rows.
pub fn write_forecasts<W: Write>(forecasts: &[Forecast], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["series", "info_set", "quarter", "made_in", "mean", "draws"])?;
    for f in forecasts {
        wtr.write_record([
            f.series.clone(),
            f.info_set.to_string(),
            f.quarter.to_string(),
            f.made_in.to_string(),
            format!("{:e}", f.mean()),
            f.sample.len().to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<forecast csv>", e))
}
