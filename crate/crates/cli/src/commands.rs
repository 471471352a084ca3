use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use mfbvar::aggregation::quarterly_monthly_weights;
use mfbvar::analysis::{
    date_cycles_with, log_levels, mean_connectedness, median_path, quarter_on_quarter, write_aggregates,
    write_connectedness, write_turning_points,
};
use mfbvar::eval::{run_recursive_exercise, write_forecasts, Vintages};
use mfbvar::mfvar::{
    estimate_with_progress, nowcast, read_draws, read_parameters, write_draws, write_nowcasts, write_parameters,
    write_path_summary, ModelSpec, NowcastDistribution, PosteriorDrawSet,
};
use mfbvar::panel::{
    load_panel, load_schema, truncate_to_vintage, write_panel, write_schema, MixedFrequencyPanel, ReleaseCalendar,
};
use mfbvar::prior::VarParameters;
use mfbvar::simulate::{simulate, DgpConfig};
use mfbvar::transform::write_weights;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    parse, parse_dgp, ConnectednessConfig, DataFiles, DateCyclesConfig, EstimateConfig, EvaluateConfig, NowcastConfig,
};
use crate::error::CliError;
use crate::manifest::OutputDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Nowcast,
    Evaluate,
    Connectedness,
    DateCycles,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Nowcast => "nowcast",
            Command::Evaluate => "evaluate",
            Command::Connectedness => "connectedness",
            Command::DateCycles => "date-cycles",
        }
    }

    fn outputs(self) -> &'static [&'static str] {
        match self {
            Command::Simulate => &[
                "panel.csv",
                "schema.csv",
                "calendar.csv",
                "weights.csv",
                "truth.csv",
                "full_model.toml",
                "benchmark_models.toml",
            ],
            Command::Estimate => &["draws.csv", "path_summary.csv", "parameters.json"],
            Command::Nowcast => &["nowcast_draws.csv", "nowcast_summary.csv"],
            Command::Evaluate => &[
                "forecasts_full.csv",
                "forecasts_benchmark.csv",
                "scores_full.csv",
                "scores_benchmark.csv",
                "score_ratios.csv",
            ],
            Command::Connectedness => &["connectedness.csv", "connectedness_summary.csv"],
            Command::DateCycles => &["turning_points.csv"],
        }
    }
}

/// Panel as configured, already cut to the requested vintage.
struct LoadedData {
    panel: MixedFrequencyPanel,
    calendar: ReleaseCalendar,
}

enum Job {
    Simulate(DgpConfig),
    Estimate(EstimateConfig, LoadedData),
    Nowcast(NowcastConfig, LoadedData),
    Evaluate(EvaluateConfig, LoadedData),
    Connectedness(ConnectednessConfig, Option<LoadedData>),
    DateCycles(DateCyclesConfig),
}

/// A validated run: everything is loaded and checked, nothing is computed.
pub struct Plan {
    pub command: Command,
    pub seed: u64,
    pub resolved: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    job: Job,
}

#[derive(Serialize)]
pub struct PlanSummary<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub out: &'a Path,
    pub inputs: Vec<crate::manifest::FileHash>,
    pub outputs: &'a [&'a str],
    pub resolved_config: &'a serde_json::Value,
}

impl Plan {
    pub fn summary<'a>(&'a self, out: &'a Path, threads: usize) -> Result<PlanSummary<'a>, CliError> {
        Ok(PlanSummary {
            command: self.command.name(),
            seed: self.seed,
            threads,
            out,
            inputs: hash_inputs(&self.inputs)?,
            outputs: self.command.outputs(),
            resolved_config: &self.resolved,
        })
    }
}

pub fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<crate::manifest::FileHash>, CliError> {
    paths
        .iter()
        .map(|p| {
            Ok(crate::manifest::FileHash {
                path: p.display().to_string(),
                sha256: crate::manifest::sha256_file(p)?,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configs serialize")
}

fn load_data(files: &DataFiles) -> Result<LoadedData, CliError> {
    let schema = load_schema(&files.schema)?;
    let panel = load_panel(&files.panel, &schema)?;
    let calendar = match &files.calendar {
        Some(lags) => ReleaseCalendar::load(lags, files.overrides.as_deref())?,
        None => {
            let cal = ReleaseCalendar::from_schema(&schema);
            match &files.overrides {
                Some(p) => cal.read_overrides(File::open(p).map_err(|e| CliError::io(p, e))?)?,
                None => cal,
            }
        }
    };
    let panel = match files.as_of {
        Some(m) => truncate_to_vintage(&panel, &calendar, m)?,
        None => panel,
    };
    Ok(LoadedData { panel, calendar })
}

/// Parses, resolves and validates the configuration of `command`.
pub fn plan(command: Command, config_path: &Path, seed: Option<u64>) -> Result<Plan, CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| CliError::io(config_path, e))?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (seed, resolved, inputs, job) = match command {
        Command::Simulate => {
            let mut cfg = parse_dgp(&text, config_path)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            (cfg.seed, to_json(&cfg), Vec::new(), Job::Simulate(cfg))
        }
        Command::Estimate => {
            let mut cfg: EstimateConfig = parse(&text, config_path)?;
            cfg.data.resolve(&base);
            override_seed(&mut cfg.model, seed);
            let data = load_data(&cfg.data)?;
            cfg.model.validate(&data.panel)?;
            (cfg.model.seed, to_json(&cfg), cfg.data.paths(), Job::Estimate(cfg, data))
        }
        Command::Nowcast => {
            let mut cfg: NowcastConfig = parse(&text, config_path)?;
            cfg.data.resolve(&base);
            override_seed(&mut cfg.model, seed);
            if cfg.targets.is_empty() {
                return Err(CliError::Config("no nowcast targets".into()));
            }
            let data = load_data(&cfg.data)?;
            cfg.model.validate(&data.panel)?;
            for t in &cfg.targets {
                if !cfg.model.variables.contains(&t.series) {
                    return Err(CliError::Config(format!("target `{}` is not a model variable", t.series)));
                }
            }
            (cfg.model.seed, to_json(&cfg), cfg.data.paths(), Job::Nowcast(cfg, data))
        }
        Command::Evaluate => {
            let mut cfg: EvaluateConfig = parse(&text, config_path)?;
            cfg.data.resolve(&base);
            override_seed(&mut cfg.model, seed);
            for b in &mut cfg.benchmarks {
                b.seed = cfg.model.seed;
            }
            cfg.exercise.validate()?;
            let data = load_data(&cfg.data)?;
            cfg.model.validate(&data.panel)?;
            for b in &cfg.benchmarks {
                b.validate(&data.panel)?;
            }
            (cfg.model.seed, to_json(&cfg), cfg.data.paths(), Job::Evaluate(cfg, data))
        }
        Command::Connectedness => {
            let mut cfg: ConnectednessConfig = parse(&text, config_path)?;
            cfg.resolve(&base);
            cfg.validate()?;
            if let Some(m) = &mut cfg.model {
                override_seed(m, seed);
            }
            let (data, inputs) = match (&cfg.data, &cfg.model) {
                (Some(files), Some(model)) => {
                    let data = load_data(files)?;
                    model.validate(&data.panel)?;
                    (Some(data), files.paths())
                }
                _ => (None, cfg.parameters.iter().cloned().collect()),
            };
            let s = cfg.model.as_ref().map_or(seed.unwrap_or(0), |m| m.seed);
            (s, to_json(&cfg), inputs, Job::Connectedness(cfg, data))
        }
        Command::DateCycles => {
            let mut cfg: DateCyclesConfig = parse(&text, config_path)?;
            cfg.resolve(&base);
            cfg.validate()?;
            let inputs = vec![cfg.draws.clone()];
            (seed.unwrap_or(0), to_json(&cfg), inputs, Job::DateCycles(cfg))
        }
    };
    for p in &inputs {
        if !p.is_file() {
            return Err(CliError::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    Ok(Plan {
        command,
        seed,
        resolved,
        inputs,
        job,
    })
}

fn override_seed(spec: &mut ModelSpec, seed: Option<u64>) {
    if let Some(s) = seed {
        spec.seed = s;
    }
}

/// Progress lines on standard error, about ten per stage.
fn report(stage: &str, done: usize, total: usize) {
    let step = (total / 10).max(1);
    if done == total || done.is_multiple_of(step) {
        eprintln!("[{stage}] {done}/{total}");
    }
}

fn run_estimate(panel: &MixedFrequencyPanel, spec: &ModelSpec) -> Result<PosteriorDrawSet, CliError> {
    let draws = estimate_with_progress(panel, spec, Some(&report))?;
    if draws.stats.clamp_events > 0 || draws.stats.rejected_sweeps > 0 {
        eprintln!(
            "[estimate] {} clamped variances, {} rejected sweeps",
            draws.stats.clamp_events, draws.stats.rejected_sweeps
        );
    }
    Ok(draws)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Model(e.into())
}

pub fn execute(plan: Plan, out: &mut OutputDir) -> Result<(), CliError> {
    match plan.job {
        Job::Simulate(cfg) => simulate_cmd(&cfg, out),
        Job::Estimate(cfg, data) => {
            let draws = run_estimate(&data.panel, &cfg.model)?;
            out.write("draws.csv", |w| Ok(write_draws(&draws, w)?))?;
            out.write("path_summary.csv", |w| Ok(write_path_summary(&draws, w)?))?;
            out.write("parameters.json", |w| Ok(write_parameters(&draws, w)?))
        }
        Job::Nowcast(cfg, data) => {
            let draws = run_estimate(&data.panel, &cfg.model)?;
            let targets: Vec<_> = cfg.targets.iter().map(|t| (t.series.clone(), t.quarter)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.seed.wrapping_add(1));
            let dist = nowcast(&data.panel, &cfg.model, &draws, &targets, &mut rng)?;
            out.write("nowcast_draws.csv", |w| Ok(write_nowcasts(&dist, w)?))?;
            out.write("nowcast_summary.csv", |w| write_nowcast_summary(&dist, w))
        }
        Job::Evaluate(cfg, data) => {
            let vintages = Vintages::from_calendar(data.panel, data.calendar);
            let outcome = run_recursive_exercise(&vintages, &cfg.model, &cfg.benchmarks, &cfg.exercise)?;
            out.write("forecasts_full.csv", |w| Ok(write_forecasts(&outcome.full_forecasts, w)?))?;
            out.write("forecasts_benchmark.csv", |w| {
                Ok(write_forecasts(&outcome.benchmark_forecasts, w)?)
            })?;
            out.write("scores_full.csv", |w| Ok(outcome.full.write_csv(w)?))?;
            out.write("scores_benchmark.csv", |w| Ok(outcome.benchmark.write_csv(w)?))?;
            out.write("score_ratios.csv", |w| Ok(outcome.ratios.write_csv(w)?))
        }
        Job::Connectedness(cfg, data) => {
            let (ids, params): (Vec<String>, Vec<VarParameters>) = match (&cfg.parameters, data, &cfg.model) {
                (Some(p), _, _) => read_parameters(File::open(p).map_err(|e| CliError::io(p, e))?)?,
                (None, Some(data), Some(model)) => {
                    let draws = run_estimate(&data.panel, model)?;
                    (draws.ids, draws.params)
                }
                _ => unreachable!("validated in plan"),
            };
            let mut tables = Vec::with_capacity(cfg.horizons.len());
            for &h in &cfg.horizons {
                let (table, skipped) = mean_connectedness(&ids, &params, h)?;
                if skipped > 0 {
                    eprintln!("[connectedness] horizon {h}: skipped {skipped} unstable draws");
                }
                tables.push(table);
            }
            out.write("connectedness.csv", |w| Ok(write_connectedness(&tables, w)?))?;
            out.write("connectedness_summary.csv", |w| Ok(write_aggregates(&tables, w)?))
        }
        Job::DateCycles(cfg) => date_cycles_cmd(&cfg, out),
    }
}

fn simulate_cmd(cfg: &DgpConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sim = simulate(cfg)?;
    let schema = cfg.schema();
    out.write("panel.csv", |w| Ok(write_panel(&sim.panel, w)?))?;
    out.write("schema.csv", |w| Ok(write_schema(&schema, w)?))?;
    out.write("calendar.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["series_id", "release_lag_months"]).map_err(csv_err)?;
        for m in &schema {
            wtr.write_record([m.id.clone(), m.release_lag_months.to_string()]).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| CliError::io("calendar.csv", e))
    })?;
    let state_ids: Vec<String> = sim.truth.iter().skip(1).map(|(id, _)| id.clone()).collect();
    out.write("weights.csv", |w| Ok(write_weights(&state_ids, &sim.weights, w)?))?;
    out.write("truth.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["draw", "series", "month", "value"]).map_err(csv_err)?;
        for (id, path) in &sim.truth {
            for (t, v) in path.iter().enumerate() {
                let month = sim.panel.month_at(t).to_string();
                wtr.write_record(["0", id.as_str(), month.as_str(), &format!("{v:e}")])
                    .map_err(csv_err)?;
            }
        }
        wtr.flush().map_err(|e| CliError::io("truth.csv", e))
    })?;
    let mut full = sim.full_spec();
    full.seed = cfg.seed;
    out.write("full_model.toml", |w| write_text(w, &full.to_toml()?))?;
    #[derive(Serialize)]
    struct Benchmarks {
        benchmarks: Vec<ModelSpec>,
    }
    let benchmarks = Benchmarks {
        benchmarks: sim
            .benchmark_specs()
            .into_iter()
            .map(|mut s| {
                s.seed = cfg.seed;
                s
            })
            .collect(),
    };
    let text = toml::to_string(&benchmarks).map_err(|e| CliError::Config(e.to_string()))?;
    out.write("benchmark_models.toml", |w| write_text(w, &text))
}

fn write_text(w: &mut impl Write, text: &str) -> Result<(), CliError> {
    w.write_all(text.as_bytes()).map_err(|e| CliError::io("<output>", e))
}

fn write_nowcast_summary(dist: &NowcastDistribution, w: &mut impl Write) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["series", "quarter", "mean", "sd", "p05", "p50", "p95"])
        .map_err(csv_err)?;
    for s in &dist.samples {
        wtr.write_record([
            s.series.clone(),
            s.quarter.to_string(),
            format!("{:e}", s.mean()),
            format!("{:e}", s.variance().sqrt()),
            format!("{:e}", s.quantile(0.05)),
            format!("{:e}", s.quantile(0.5)),
            format!("{:e}", s.quantile(0.95)),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::io("nowcast_summary.csv", e))
}

/// Median monthly path per series, optionally turned into quarter-on-quarter
/// growth, cumulated to log levels and dated.
fn date_cycles_cmd(cfg: &DateCyclesConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let dump = read_draws(File::open(&cfg.draws).map_err(|e| CliError::io(&cfg.draws, e))?)?;
    let ids: Vec<String> = if cfg.series.is_empty() {
        dump.series.keys().cloned().collect()
    } else {
        cfg.series.clone()
    };
    let skip = if cfg.quarterly {
        quarterly_monthly_weights().len() - 1
    } else {
        0
    };
    let mut sets = Vec::with_capacity(ids.len());
    for id in ids {
        let paths = dump
            .series
            .get(&id)
            .ok_or_else(|| CliError::Model(mfbvar::Error::UnknownSeries(id.clone())))?;
        let median = median_path(paths)?;
        let growth = if cfg.quarterly {
            quarter_on_quarter(&median)
        } else {
            median
        };
        let set = date_cycles_with(&log_levels(&growth), cfg.rules.into())?;
        sets.push((id, set));
    }
    let start = dump.start.offset(skip as i32);
    out.write("turning_points.csv", |w| Ok(write_turning_points(&sets, start, w)?))
}
