//! Mixed-frequency VAR estimation with intertemporal and cross-sectional
//! restrictions.
//!
//! Estimation runs in two steps. A quarterly MF-VAR first interpolates
//! annual state series to quarters before their frequency break; a monthly
//! MF-VAR then treats those quarterly draws (cycled one per sweep) as
//! pseudo-observations and draws the latent monthly paths and parameters.

mod base;
mod io;
mod nowcast;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use base::{
    BaseDraw, BaseProblem, BoundRow, BuiltSystem, ChainState, ChainStats, Layout, McmcConfig, Progress, Slack,
    SweepOptions,
};
pub use io::{
    read_draws, read_parameters, write_draws, write_nowcasts, write_parameters, write_path_summary, DrawPaths,
    PARAMETER_FORMAT_VERSION,
};
pub use nowcast::{
    freeze_parameters, nowcast, resmooth, simulate_forward, FreezePolicy, NowcastDistribution,
    NowcastSample,
};

use crate::aggregation::{
    annual_monthly_row, annual_quarterly_row, cross_sectional_quarterly_row, cross_sectional_row,
    quarterly_monthly_row, quarterly_monthly_weights, ConstraintRow, RowKind, Schedule, Target, Term,
};
use crate::error::{Error, Result};
use crate::panel::{Frequency, MixedFrequencyPanel, Role, Scope, Series};
use crate::prior::{HorseshoeState, PriorConfig, VarParameters};
use crate::time::{Month, Quarter};
use crate::transform::fill_exogenous_ragged_edge;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateWeight {
    pub state: String,
    pub weight: f64,
}

/// Adding-up restriction of state growth to national growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionSpec {
    pub national: String,
    pub states: Vec<StateWeight>,
    /// `monthly`: latent national monthly growth equals the weighted latent
    /// state growths. `quarterly`: observed national quarterly growth equals
    /// the quarterly aggregate of the weighted latent state growths.
    #[serde(default = "default_cs_frequency")]
    pub frequency: Frequency,
}

fn default_cs_frequency() -> Frequency {
    Frequency::Monthly
}

fn default_lags() -> usize {
    5
}
fn default_quarterly_lags() -> usize {
    2
}
fn default_exog_lags() -> usize {
    1
}
fn default_init_scale() -> f64 {
    10.0
}

/// Model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Endogenous series in equation order: national monthly series, then
    /// national lower-frequency series, then state series.
    pub variables: Vec<String>,
    #[serde(default = "default_lags")]
    pub lags: usize,
    /// Lag length of the quarterly model used for pre-break interpolation.
    #[serde(default = "default_quarterly_lags")]
    pub quarterly_lags: usize,
    /// Exogenous regressors enter at lags `0..=exogenous_lags`.
    #[serde(default = "default_exog_lags")]
    pub exogenous_lags: usize,
    /// Exogenous series per endogenous variable.
    #[serde(default)]
    pub exogenous: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub cross_sectional: Vec<CrossSectionSpec>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    /// Chain settings of the quarterly step; defaults to `mcmc`.
    #[serde(default)]
    pub quarterly_mcmc: Option<McmcConfig>,
    #[serde(default = "default_init_scale")]
    pub init_variance_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(variables: Vec<String>) -> Self {
        Self {
            variables,
            lags: default_lags(),
            quarterly_lags: default_quarterly_lags(),
            exogenous_lags: default_exog_lags(),
            exogenous: BTreeMap::new(),
            cross_sectional: Vec::new(),
            prior: PriorConfig::default(),
            mcmc: McmcConfig::default(),
            quarterly_mcmc: None,
            init_variance_scale: default_init_scale(),
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn exog_of(&self, var: &str) -> &[String] {
        self.exogenous.get(var).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Checks ids, ordering and restriction references against `panel`.
    pub fn validate(&self, panel: &MixedFrequencyPanel) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::Config("no variables".into()));
        }
        if self.lags == 0 || self.quarterly_lags == 0 {
            return Err(Error::Config("lag lengths must be positive".into()));
        }
        if self.exogenous_lags > self.lags {
            return Err(Error::Config("exogenous lags may not exceed the VAR lag length".into()));
        }
        if !(self.init_variance_scale > 0.0) {
            return Err(Error::Config("init_variance_scale must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut last_rank = 0;
        for id in &self.variables {
            if !seen.insert(id) {
                return Err(Error::Config(format!("variable `{id}` listed twice")));
            }
            let meta = &panel.require(id)?.meta;
            if meta.role != Role::Endogenous {
                return Err(Error::Config(format!("variable `{id}` is not endogenous")));
            }
            let rank = match (&meta.scope, meta.frequency) {
                (Scope::National, Frequency::Monthly) => 0,
                (Scope::National, _) => 1,
                (Scope::State(_), _) => 2,
            };
            if rank < last_rank {
                return Err(Error::Config(format!(
                    "variable `{id}` breaks the ordering: national monthly, national lower-frequency, state"
                )));
            }
            last_rank = rank;
        }
        for (var, list) in &self.exogenous {
            if !self.variables.contains(var) {
                return Err(Error::UnknownSeries(var.clone()));
            }
            let scope = &panel.require(var)?.meta.scope;
            for x in list {
                let meta = &panel.require(x)?.meta;
                if meta.role != Role::Exogenous {
                    return Err(Error::Config(format!("`{x}` is not an exogenous series")));
                }
                if meta.frequency == Frequency::Annual {
                    return Err(Error::Config(format!("exogenous series `{x}` may not be annual")));
                }
                if &meta.scope != scope {
                    return Err(Error::Config(format!(
                        "exogenous series `{x}` ({}) does not belong to `{var}` ({scope})",
                        meta.scope
                    )));
                }
            }
        }
        for cs in &self.cross_sectional {
            if cs.states.is_empty() {
                return Err(Error::Config("cross-sectional restriction without states".into()));
            }
            panel.require(&cs.national)?;
            if cs.frequency == Frequency::Monthly && !self.variables.contains(&cs.national) {
                return Err(Error::Config(format!(
                    "monthly adding-up restriction needs `{}` as a model variable",
                    cs.national
                )));
            }
            for s in &cs.states {
                if !self.variables.contains(&s.state) {
                    return Err(Error::UnknownSeries(s.state.clone()));
                }
            }
        }
        Ok(())
    }

    fn slack_variance(&self) -> f64 {
        let p = &self.prior;
        if p.cs_shape > 1.0 {
            p.cs_scale / (p.cs_shape - 1.0)
        } else {
            p.cs_scale.max(1e-6)
        }
    }

    fn state_weights(cs: &CrossSectionSpec) -> Vec<(String, f64)> {
        cs.states.iter().map(|s| (s.state.clone(), s.weight)).collect()
    }
}

/// Fills leading and interior gaps with the series mean and the trailing
/// edge (plus `extra` further periods) by AR(1) forecasts.
fn complete_regressor(values: &[Option<f64>], extra: usize) -> Result<Vec<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidInput("exogenous series has no observations".into()));
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    let last = values.iter().rposition(|v| v.is_some()).expect("non-empty");
    let mut head: Vec<Option<f64>> = values[..=last]
        .iter()
        .map(|v| Some(v.unwrap_or(mean)))
        .collect();
    head.extend(std::iter::repeat_n(None, values.len() - last - 1));
    let filled = if present.len() >= 10 {
        fill_exogenous_ragged_edge(&head, extra)?
    } else {
        let mut h = head;
        h.resize(values.len() + extra, None);
        h.into_iter().map(|v| Some(v.unwrap_or(mean))).collect()
    };
    Ok(filled.into_iter().map(|v| v.expect("filled")).collect())
}

/// Values of `series` at quarter-end months on the panel axis, one per
/// quarter in `quarters`.
fn quarterly_values(panel: &MixedFrequencyPanel, series: &Series, quarters: &[Quarter]) -> Vec<Option<f64>> {
    quarters
        .iter()
        .map(|q| panel.index_of(q.end_month()).and_then(|t| series.values[t]))
        .collect()
}

/// Monthly regressor on the panel axis extended by `extra` months.
fn monthly_regressor(panel: &MixedFrequencyPanel, id: &str, extra: usize) -> Result<Vec<f64>> {
    let s = panel.require(id)?;
    match s.meta.frequency {
        Frequency::Monthly => complete_regressor(&s.values, extra),
        _ => {
            // constant growth within the quarter: a third per month
            let first_q = panel.start().quarter();
            let last = panel.end().offset(extra as i32);
            let mut quarters = vec![first_q];
            while quarters.last().expect("non-empty").end_month() < last {
                let next = quarters.last().expect("non-empty").next();
                quarters.push(next);
            }
            let observed_q: Vec<Quarter> = quarters
                .iter()
                .copied()
                .filter(|q| q.end_month() <= panel.end())
                .collect();
            let raw = quarterly_values(panel, s, &observed_q);
            let filled = complete_regressor(&raw, quarters.len() - observed_q.len())?;
            let mut out = Vec::with_capacity(panel.len() + extra);
            for t in 0..panel.len() + extra {
                let m = panel.start().offset(t as i32);
                let qi = quarters
                    .iter()
                    .position(|q| *q == m.quarter())
                    .expect("quarter on axis");
                out.push(filled[qi] / 3.0);
            }
            Ok(out)
        }
    }
}

fn lagged_columns(columns: &[Vec<f64>], lags: usize) -> DMatrix<f64> {
    let t_len = columns.first().map_or(0, |c| c.len());
    let mut m = DMatrix::zeros(t_len, columns.len() * (lags + 1));
    for (c, col) in columns.iter().enumerate() {
        for l in 0..=lags {
            for t in 0..t_len {
                m[(t, c * (lags + 1) + l)] = col[t.saturating_sub(l)];
            }
        }
    }
    m
}

/// Monthly exogenous block of every equation, extended by `extra` months.
pub(crate) fn monthly_exogenous(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    extra: usize,
) -> Result<Vec<DMatrix<f64>>> {
    spec.variables
        .iter()
        .map(|v| {
            let cols = spec
                .exog_of(v)
                .iter()
                .map(|x| monthly_regressor(panel, x, extra))
                .collect::<Result<Vec<_>>>()?;
            if cols.is_empty() {
                return Ok(DMatrix::zeros(panel.len() + extra, 0));
            }
            Ok(lagged_columns(&cols, spec.exogenous_lags))
        })
        .collect()
}

fn values_where(panel: &MixedFrequencyPanel, series: &Series, schedule: &Schedule) -> Vec<Option<f64>> {
    (0..panel.len())
        .map(|t| {
            let m = panel.month_at(t);
            if schedule.is_active(m) {
                series.values[t]
            } else {
                None
            }
        })
        .collect()
}

/// Quarterly draws of annual series before their frequency break.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterlyDraws {
    pub ids: Vec<String>,
    pub quarters: Vec<Quarter>,
    /// One `quarters x ids` matrix per retained draw.
    pub draws: Vec<DMatrix<f64>>,
}

impl QuarterlyDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    fn value(&self, draw: usize, id: &str, quarter: Quarter) -> Option<f64> {
        let v = self.ids.iter().position(|s| s == id)?;
        let q = self.quarters.iter().position(|x| *x == quarter)?;
        Some(self.draws[draw][(q, v)])
    }
}

/// Index of the pre-break quarterly restriction rows in a monthly problem,
/// with the series they belong to.
type PseudoRows = Vec<(usize, String)>;

/// Monthly MF-VAR on the panel axis. Annual series are tied to monthly
/// growth through pseudo-observed quarters when `pseudo` holds draws for
/// them, and through the annual/monthly triangle otherwise.
pub fn monthly_problem(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    pseudo: Option<&QuarterlyDraws>,
) -> Result<BaseProblem> {
    Ok(monthly_problem_with_pseudo(panel, spec, pseudo)?.0)
}

fn monthly_problem_with_pseudo(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    pseudo: Option<&QuarterlyDraws>,
) -> Result<(BaseProblem, PseudoRows)> {
    spec.validate(panel)?;
    let t_len = panel.len();
    let mut data = Vec::new();
    let mut rows: Vec<BoundRow> = Vec::new();
    let mut pseudo_rows = Vec::new();
    for id in &spec.variables {
        let s = panel.require(id)?;
        match s.meta.frequency {
            Frequency::Monthly => data.push(s.values.clone()),
            Frequency::Quarterly => {
                data.push(vec![None; t_len]);
                let row = quarterly_monthly_row(id, id)?;
                let values = values_where(panel, s, &row.schedule);
                rows.push(BoundRow { row, values });
            }
            Frequency::Annual => {
                data.push(vec![None; t_len]);
                let brk = s.meta.frequency_break;
                let mut row = quarterly_monthly_row(id, id)?;
                row.schedule.from = brk;
                let values = values_where(panel, s, &row.schedule);
                rows.push(BoundRow { row, values });
                let has_pseudo = pseudo.is_some_and(|p| p.ids.contains(id) && !p.is_empty());
                if has_pseudo {
                    let mut row = quarterly_monthly_row(id, id)?;
                    row.schedule.before = brk;
                    pseudo_rows.push((rows.len(), id.clone()));
                    rows.push(BoundRow {
                        row,
                        values: vec![None; t_len],
                    });
                } else {
                    let row = annual_monthly_row(id, id, brk)?;
                    let values = values_where(panel, s, &row.schedule);
                    rows.push(BoundRow { row, values });
                }
            }
        }
    }
    let variance = spec.slack_variance();
    for cs in &spec.cross_sectional {
        let weights = ModelSpec::state_weights(cs);
        match cs.frequency {
            Frequency::Monthly => {
                let row = cross_sectional_row(&cs.national, &weights, variance)?;
                rows.push(BoundRow {
                    row,
                    values: vec![Some(0.0); t_len],
                });
            }
            _ => {
                let row = cross_sectional_quarterly_row(&cs.national, &weights, variance)?;
                let values = values_where(panel, panel.require(&cs.national)?, &row.schedule);
                rows.push(BoundRow { row, values });
            }
        }
    }
    let problem = BaseProblem {
        ids: spec.variables.clone(),
        period_ends: (0..t_len).map(|t| panel.month_at(t)).collect(),
        data,
        rows,
        exog: monthly_exogenous(panel, spec, 0)?,
        lags: spec.lags,
        init_variance_scale: spec.init_variance_scale,
    };
    Ok((problem, pseudo_rows))
}

/// Writes draw `k` of `pseudo` into the pre-break quarterly rows.
fn set_pseudo(problem: &mut BaseProblem, rows: &PseudoRows, pseudo: &QuarterlyDraws, k: usize) {
    for (ri, id) in rows {
        let r = &mut problem.rows[*ri];
        for (t, m) in problem.period_ends.iter().enumerate() {
            r.values[t] = if r.row.schedule.is_active(*m) {
                pseudo.value(k, id, m.quarter())
            } else {
                None
            };
        }
    }
}

/// Quarter-end months fully inside the panel.
fn panel_quarters(panel: &MixedFrequencyPanel) -> Vec<Quarter> {
    let mut q = panel.start().quarter();
    if q.first_month() < panel.start() {
        q = q.next();
    }
    let mut out = Vec::new();
    while q.end_month() <= panel.end() {
        out.push(q);
        q = q.next();
    }
    out
}

/// Quarterly aggregate of a monthly series at each quarter in `quarters`.
fn aggregate_monthly(panel: &MixedFrequencyPanel, values: &[Option<f64>], quarters: &[Quarter]) -> Vec<Option<f64>> {
    let w = quarterly_monthly_weights();
    quarters
        .iter()
        .map(|q| {
            let end = panel.index_of(q.end_month())?;
            if end + 1 < w.len() {
                return None;
            }
            let mut acc = 0.0;
            for (lag, wk) in w.iter().enumerate() {
                acc += wk * values[end - lag]?;
            }
            Some(acc)
        })
        .collect()
}

/// Whether `panel` holds annual series observed before their break, which
/// is what the quarterly step interpolates.
pub fn needs_quarterly_step(panel: &MixedFrequencyPanel, spec: &ModelSpec) -> Result<bool> {
    for id in &spec.variables {
        let s = panel.require(id)?;
        if s.meta.frequency != Frequency::Annual {
            continue;
        }
        let before_break = (0..panel.len()).any(|t| {
            s.values[t].is_some() && s.meta.frequency_at(panel.month_at(t)) == Frequency::Annual
        });
        if before_break {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Quarterly MF-VAR: monthly series are aggregated to quarters, annual series
/// are latent quarterly growth tied to annual growth before their break and
/// observed after it.
pub fn quarterly_problem(panel: &MixedFrequencyPanel, spec: &ModelSpec) -> Result<BaseProblem> {
    spec.validate(panel)?;
    let quarters = panel_quarters(panel);
    let q_len = quarters.len();
    let mut data = Vec::new();
    let mut rows = Vec::new();
    for id in &spec.variables {
        let s = panel.require(id)?;
        match s.meta.frequency {
            Frequency::Monthly => data.push(aggregate_monthly(panel, &s.values, &quarters)),
            Frequency::Quarterly => data.push(quarterly_values(panel, s, &quarters)),
            Frequency::Annual => {
                let vals = quarterly_values(panel, s, &quarters);
                let brk = s.meta.frequency_break;
                data.push(
                    quarters
                        .iter()
                        .zip(&vals)
                        .map(|(q, v)| if brk.is_some_and(|b| q.end_month() >= b) { *v } else { None })
                        .collect(),
                );
                let row = annual_quarterly_row(id, id, brk)?;
                let values = quarters
                    .iter()
                    .zip(&vals)
                    .map(|(q, v)| if row.schedule.is_active(q.end_month()) { *v } else { None })
                    .collect();
                rows.push(BoundRow { row, values });
            }
        }
    }
    let variance = spec.slack_variance();
    for cs in &spec.cross_sectional {
        let terms: Vec<Term> = cs
            .states
            .iter()
            .map(|s| Term {
                latent: s.state.clone(),
                lag: 0,
                weight: s.weight,
            })
            .collect();
        let (target, values) = if spec.variables.contains(&cs.national) {
            (Target::Latent(cs.national.clone()), vec![Some(0.0); q_len])
        } else {
            let s = panel.require(&cs.national)?;
            (Target::Observed(cs.national.clone()), quarterly_values(panel, s, &quarters))
        };
        let row = ConstraintRow {
            kind: RowKind::CrossSectionalQuarterly,
            target,
            terms,
            variance,
            schedule: Schedule::new(crate::aggregation::Activation::Every),
        };
        rows.push(BoundRow { row, values });
    }
    let exog = spec
        .variables
        .iter()
        .map(|v| {
            let cols = spec
                .exog_of(v)
                .iter()
                .map(|x| {
                    let s = panel.require(x)?;
                    match s.meta.frequency {
                        Frequency::Monthly => {
                            let m: Vec<Option<f64>> =
                                complete_regressor(&s.values, 0)?.into_iter().map(Some).collect();
                            let agg = aggregate_monthly(panel, &m, &quarters);
                            complete_regressor(&agg, 0)
                        }
                        _ => complete_regressor(&quarterly_values(panel, s, &quarters), 0),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if cols.is_empty() {
                return Ok(DMatrix::zeros(q_len, 0));
            }
            Ok(lagged_columns(&cols, spec.exogenous_lags.min(spec.quarterly_lags)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaseProblem {
        ids: spec.variables.clone(),
        period_ends: quarters.iter().map(|q| q.end_month()).collect(),
        data,
        rows,
        exog,
        lags: spec.quarterly_lags,
        init_variance_scale: spec.init_variance_scale,
    })
}

/// Draws of the quarterly model, reduced to the pre-break quarters of the
/// annual series.
pub fn run_step1_quarterly<R: Rng + ?Sized>(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<QuarterlyDraws> {
    run_step1_with_progress(panel, spec, mcmc, rng, None)
}

pub fn run_step1_with_progress<R: Rng + ?Sized>(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    mcmc: &McmcConfig,
    rng: &mut R,
    progress: Option<Progress<'_>>,
) -> Result<QuarterlyDraws> {
    let mut problem = quarterly_problem(panel, spec)?;
    let (draws, _) = base::run_chain(
        &mut problem,
        mcmc,
        &spec.prior,
        rng,
        "quarterly",
        progress,
        &mut |_, _| {},
    )?;
    let mut ids = Vec::new();
    let mut cols = Vec::new();
    let mut quarters: Vec<Quarter> = Vec::new();
    for (v, id) in spec.variables.iter().enumerate() {
        let meta = &panel.require(id)?.meta;
        if meta.frequency == Frequency::Annual {
            ids.push(id.clone());
            cols.push(v);
        }
    }
    let mut keep = Vec::new();
    for (t, m) in problem.period_ends.iter().enumerate() {
        let pre_break = ids.iter().any(|id| {
            panel
                .require(id)
                .map(|s| s.meta.frequency_at(*m) == Frequency::Annual)
                .unwrap_or(false)
        });
        if pre_break {
            keep.push(t);
            quarters.push(m.quarter());
        }
    }
    let out = draws
        .iter()
        .map(|d| DMatrix::from_fn(keep.len(), cols.len(), |i, j| d.data[(keep[i], cols[j])]))
        .collect();
    Ok(QuarterlyDraws {
        ids,
        quarters,
        draws: out,
    })
}

/// Retained draws of the monthly model.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDrawSet {
    pub ids: Vec<String>,
    /// Variables with any unobserved month (latent somewhere on the axis).
    pub latent: Vec<bool>,
    pub start: Month,
    pub months: usize,
    pub vintage: String,
    pub params: Vec<VarParameters>,
    pub scales: Vec<Vec<HorseshoeState>>,
    /// Completed monthly data, `months x variables`, per draw.
    pub paths: Vec<DMatrix<f64>>,
    /// Pre-break quarterly draws used as pseudo-observations.
    pub quarterly: Option<QuarterlyDraws>,
    /// Quarterly draw paired with each retained monthly draw.
    pub quarterly_index: Vec<usize>,
    pub mcmc: McmcConfig,
    pub seed: u64,
    pub stats: ChainStats,
}

impl PosteriorDrawSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.months as i32 - 1)
    }

    pub fn var_index(&self, id: &str) -> Result<usize> {
        self.ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| Error::UnknownSeries(id.to_string()))
    }

    /// Posterior mean of the monthly path of `id`.
    pub fn mean_path(&self, id: &str) -> Result<Vec<f64>> {
        let v = self.var_index(id)?;
        if self.is_empty() {
            return Err(Error::NoRetainedDraws);
        }
        let n = self.len() as f64;
        Ok((0..self.months)
            .map(|t| self.paths.iter().map(|p| p[(t, v)]).sum::<f64>() / n)
            .collect())
    }
}

/// Gibbs chain of the monthly model conditional on the quarterly draws.
pub fn run_step2_monthly<R: Rng + ?Sized>(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    quarterly: Option<&QuarterlyDraws>,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorDrawSet> {
    run_step2_with_progress(panel, spec, quarterly, mcmc, rng, None)
}

pub fn run_step2_with_progress<R: Rng + ?Sized>(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    quarterly: Option<&QuarterlyDraws>,
    mcmc: &McmcConfig,
    rng: &mut R,
    progress: Option<Progress<'_>>,
) -> Result<PosteriorDrawSet> {
    if quarterly.is_some_and(|q| q.is_empty()) {
        return Err(Error::InvalidInput("quarterly draw set is empty".into()));
    }
    let (mut problem, pseudo_rows) = monthly_problem_with_pseudo(panel, spec, quarterly)?;
    let n_q = quarterly.map_or(0, |q| q.len());
    let mut pairing = Vec::new();
    let mut current = usize::MAX;
    let (draws, stats) = {
        let mut hook = |sweep: usize, prob: &mut BaseProblem| {
            if let Some(q) = quarterly.filter(|_| !pseudo_rows.is_empty()) {
                let k = sweep % n_q;
                if k != current {
                    set_pseudo(prob, &pseudo_rows, q, k);
                    current = k;
                }
            }
        };
        base::run_chain(&mut problem, mcmc, &spec.prior, rng, "monthly", progress, &mut hook)?
    };
    let thin = mcmc.thin.max(1);
    for i in 0..draws.len() {
        let sweep = mcmc.burn_in + (i + 1) * thin - 1;
        pairing.push(if n_q > 0 && !pseudo_rows.is_empty() { sweep % n_q } else { 0 });
    }
    Ok(assemble(panel, spec, &problem, draws, quarterly.cloned(), pairing, *mcmc, stats))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    problem: &BaseProblem,
    draws: Vec<BaseDraw>,
    quarterly: Option<QuarterlyDraws>,
    quarterly_index: Vec<usize>,
    mcmc: McmcConfig,
    stats: ChainStats,
) -> PosteriorDrawSet {
    let mut params = Vec::with_capacity(draws.len());
    let mut scales = Vec::with_capacity(draws.len());
    let mut paths = Vec::with_capacity(draws.len());
    for d in draws {
        params.push(d.params);
        scales.push(d.scales);
        paths.push(d.data);
    }
    PosteriorDrawSet {
        ids: spec.variables.clone(),
        latent: problem.data.iter().map(|d| d.iter().any(|v| v.is_none())).collect(),
        start: panel.start(),
        months: panel.len(),
        vintage: panel.vintage().to_string(),
        params,
        scales,
        paths,
        quarterly,
        quarterly_index,
        mcmc,
        seed: spec.seed,
        stats,
    }
}

/// Both estimation steps with a generator seeded from `spec.seed`.
pub fn estimate(panel: &MixedFrequencyPanel, spec: &ModelSpec) -> Result<PosteriorDrawSet> {
    estimate_with_progress(panel, spec, None)
}

pub fn estimate_with_progress(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    progress: Option<Progress<'_>>,
) -> Result<PosteriorDrawSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let quarterly = if needs_quarterly_step(panel, spec)? {
        let mcmc = spec.quarterly_mcmc.unwrap_or(spec.mcmc);
        Some(run_step1_with_progress(panel, spec, &mcmc, &mut rng, progress)?)
    } else {
        None
    };
    run_step2_with_progress(panel, spec, quarterly.as_ref(), &spec.mcmc, &mut rng, progress)
}

/// State-space system of the monthly model under `params` (pre-break
/// quarters, if any, pseudo-observed from draw `pseudo_draw` of `quarterly`).
pub fn build_system(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    params: &VarParameters,
    quarterly: Option<(&QuarterlyDraws, usize)>,
) -> Result<BuiltSystem> {
    let (mut problem, rows) = monthly_problem_with_pseudo(panel, spec, quarterly.map(|q| q.0))?;
    if let Some((q, k)) = quarterly {
        set_pseudo(&mut problem, &rows, q, k);
    }
    let layout = problem.layout()?;
    problem.build(&layout, params)
}

/// Monthly problem with pre-break rows filled from draw `k` of `quarterly`.
pub(crate) fn monthly_problem_for_draw(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    quarterly: Option<&QuarterlyDraws>,
    k: usize,
) -> Result<BaseProblem> {
    let (mut problem, rows) = monthly_problem_with_pseudo(panel, spec, quarterly)?;
    if let Some(q) = quarterly {
        if !rows.is_empty() {
            set_pseudo(&mut problem, &rows, q, k);
        }
    }
    Ok(problem)
}
