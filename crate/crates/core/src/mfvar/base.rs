//! Frequency-agnostic MF-VAR on a single base axis: state-space assembly
//! from VAR parameters and the Gibbs sweep alternating latent paths and
//! parameters.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregation::{ConstraintRow, RowKind, Target};
use crate::error::{Error, Result};
use crate::linalg::condition_gaussian;
use crate::prior::{
    build_designs, draw_coefficients, draw_shrinkage_scales, draw_sigma2, EquationState, HorseshoeState, PriorConfig,
    VarParameters,
};
use crate::statespace::{simulation_smoother, Observations, Period, StatePath, StateSpaceSystem};
use crate::time::Month;

/// A restriction together with its left-hand-side value at every base period
/// (`None` where it is inactive or unobserved).
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub row: ConstraintRow,
    pub values: Vec<Option<f64>>,
}

/// Which slack variance a noisy row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slack {
    Monthly,
    Quarterly,
}

impl BoundRow {
    pub fn slack(&self) -> Option<Slack> {
        if self.row.is_exact() {
            None
        } else if self.row.kind == RowKind::CrossSectionalMonthly {
            Some(Slack::Monthly)
        } else {
            Some(Slack::Quarterly)
        }
    }
}

/// Data and restrictions of an MF-VAR on one base frequency.
#[derive(Debug, Clone)]
pub struct BaseProblem {
    pub ids: Vec<String>,
    /// Calendar month in which each base period ends.
    pub period_ends: Vec<Month>,
    /// Base-frequency observations, `data[var][t]`.
    pub data: Vec<Vec<Option<f64>>>,
    pub rows: Vec<BoundRow>,
    /// Exogenous columns per equation, `T x e_i`.
    pub exog: Vec<DMatrix<f64>>,
    pub lags: usize,
    /// Initial-state variance as a multiple of each series' spread.
    pub init_variance_scale: f64,
}

/// A restriction evaluated at one period.
#[derive(Debug, Clone)]
struct Instance {
    row: usize,
    value: f64,
    /// `(variable, data index, weight)`.
    terms: Vec<(usize, usize, f64)>,
}

/// Index bookkeeping derived from a [`BaseProblem`].
#[derive(Debug, Clone)]
pub struct Layout {
    pub n_vars: usize,
    pub lags: usize,
    /// Number of stacked lags of each state variable.
    pub depth: usize,
    /// First period handled by the filter.
    pub start: usize,
    pub len: usize,
    noisy: Vec<Option<usize>>,
    n_noisy: usize,
}

impl Layout {
    pub fn state_dim(&self) -> usize {
        self.n_vars * self.depth
    }

    pub fn shock_dim(&self) -> usize {
        self.n_vars + self.n_noisy
    }

    /// Index of variable `var` at lag `lag` in the state vector.
    pub fn pos(&self, var: usize, lag: usize) -> usize {
        lag * self.n_vars + var
    }
}

fn id_index(ids: &[String], id: &str) -> Result<usize> {
    ids.iter()
        .position(|s| s == id)
        .ok_or_else(|| Error::UnknownSeries(id.to_string()))
}

/// Assembled system plus the observation vector and initial moments.
#[derive(Debug, Clone)]
pub struct BuiltSystem {
    pub system: StateSpaceSystem,
    pub observations: Observations,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

impl BaseProblem {
    pub fn len(&self) -> usize {
        self.period_ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.period_ends.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        let t = self.len();
        if n == 0 {
            return Err(Error::InvalidInput("model has no variables".into()));
        }
        if self.lags == 0 {
            return Err(Error::InvalidInput("lag length must be positive".into()));
        }
        if self.data.len() != n || self.data.iter().any(|d| d.len() != t) {
            return Err(Error::Dimension("data must hold one full column per variable".into()));
        }
        if self.exog.len() != n || self.exog.iter().any(|e| e.nrows() != t) {
            return Err(Error::Dimension("exogenous blocks must match the base axis".into()));
        }
        if self.exog.iter().any(|e| e.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("exogenous regressors".into()));
        }
        if self.data.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations".into()));
        }
        for r in &self.rows {
            if r.values.len() != t {
                return Err(Error::Dimension("restriction values must match the base axis".into()));
            }
            for term in &r.row.terms {
                id_index(&self.ids, &term.latent)?;
            }
            if let Target::Latent(id) = &r.row.target {
                id_index(&self.ids, id)?;
            }
        }
        let needed = self.lags + 2;
        if t < needed {
            return Err(Error::TooShort { needed, got: t });
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let max_lag = self.rows.iter().map(|r| r.row.max_lag()).max().unwrap_or(0);
        let mut noisy = vec![None; self.rows.len()];
        let mut n_noisy = 0;
        for (i, r) in self.rows.iter().enumerate() {
            if !r.row.is_exact() {
                noisy[i] = Some(n_noisy);
                n_noisy += 1;
            }
        }
        Ok(Layout {
            n_vars: self.ids.len(),
            lags: self.lags,
            depth: self.lags.max(max_lag + 1),
            start: self.lags,
            len: self.len(),
            noisy,
            n_noisy,
        })
    }

    /// Restrictions active at period `t` whose terms all lie on the axis.
    fn instances(&self, t: usize) -> Result<Vec<Instance>> {
        let mut out = Vec::new();
        for (ri, r) in self.rows.iter().enumerate() {
            let Some(value) = r.values[t] else { continue };
            let mut terms = Vec::with_capacity(r.row.terms.len() + 1);
            let mut inside = true;
            for term in &r.row.terms {
                if term.lag > t {
                    inside = false;
                    break;
                }
                terms.push((id_index(&self.ids, &term.latent)?, t - term.lag, term.weight));
            }
            if !inside {
                continue;
            }
            if let Target::Latent(id) = &r.row.target {
                terms.push((id_index(&self.ids, id)?, t, -1.0));
            }
            out.push(Instance { row: ri, value, terms });
        }
        Ok(out)
    }

    /// Rough completion of the latent data used to start the sampler:
    /// low-frequency values are spread evenly over their base periods.
    pub fn initial_fill(&self) -> DMatrix<f64> {
        let n = self.ids.len();
        let t_len = self.len();
        let mut filled: Vec<Vec<Option<f64>>> = self.data.clone();
        for r in &self.rows {
            let stride = match r.row.kind {
                RowKind::QuarterlyMonthly => 3,
                RowKind::AnnualMonthly => 12,
                RowKind::AnnualQuarterly => 4,
                _ => continue,
            };
            let Target::Observed(_) = &r.row.target else { continue };
            let Some(var) = r.row.terms.first().and_then(|t| self.ids.iter().position(|s| *s == t.latent))
            else {
                continue;
            };
            let per_period = r.row.weight_sum();
            for (t, v) in r.values.iter().enumerate() {
                let Some(v) = v else { continue };
                for j in t.saturating_sub(stride - 1)..=t {
                    if self.data[var][j].is_none() {
                        filled[var][j] = Some(v / per_period);
                    }
                }
            }
        }
        let mut out = DMatrix::zeros(t_len, n);
        for v in 0..n {
            let present: Vec<f64> = filled[v].iter().flatten().copied().collect();
            let mean = if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            };
            for t in 0..t_len {
                out[(t, v)] = filled[v][t].unwrap_or(mean);
            }
        }
        out
    }

    /// State-space form of the model under `params`.
    pub fn build(&self, layout: &Layout, params: &VarParameters) -> Result<BuiltSystem> {
        let n = layout.n_vars;
        if params.n_vars() != n || params.n_lags() != layout.lags {
            return Err(Error::Dimension(format!(
                "parameters for {} variables and {} lags, model has {n} and {}",
                params.n_vars(),
                params.n_lags(),
                layout.lags
            )));
        }
        for (i, e) in self.exog.iter().enumerate() {
            if params.exogenous[i].len() != e.ncols() {
                return Err(Error::Dimension(format!("exogenous loadings of equation {i}")));
            }
        }
        let ainv = params.a_inverse();
        let phis = params.reduced_lags();
        let impact = params.impact();
        let dim = layout.state_dim();
        let k = layout.shock_dim();

        let mut trans = DMatrix::zeros(dim, dim);
        for a in 0..n {
            for (l, phi) in phis.iter().enumerate() {
                for b in 0..n {
                    trans[(a, layout.pos(b, l))] = phi[(a, b)];
                }
            }
        }
        for lag in 1..layout.depth {
            for a in 0..n {
                trans[(layout.pos(a, lag), layout.pos(a, lag - 1))] = 1.0;
            }
        }
        let mut hmat = DMatrix::zeros(dim, k);
        for a in 0..n {
            for j in 0..n {
                hmat[(a, j)] = impact[(a, j)];
            }
        }
        let trans = Arc::new(trans);
        let hmat = Arc::new(hmat);
        let noise_sd = |ri: usize| -> f64 {
            match self.rows[ri].slack() {
                None => 0.0,
                Some(Slack::Monthly) => params.sigma_cs_monthly.max(0.0).sqrt(),
                Some(Slack::Quarterly) => params.sigma_cs_quarterly.max(0.0).sqrt(),
            }
        };

        // reduced-form intercept including exogenous terms
        let intercept_at = |t: usize| -> DVector<f64> {
            let mut s = DVector::from_column_slice(&params.intercept);
            for (i, e) in self.exog.iter().enumerate() {
                for c in 0..e.ncols() {
                    s[i] += params.exogenous[i][c] * e[(t, c)];
                }
            }
            &ainv * s
        };

        let mut periods = Vec::with_capacity(layout.len - layout.start);
        let mut observations = Vec::with_capacity(layout.len - layout.start);
        for t in layout.start..layout.len {
            let mut d = DVector::zeros(dim);
            d.rows_mut(0, n).copy_from(&intercept_at(t));

            let insts = self.instances(t)?;
            let mut rows_z: Vec<Vec<(usize, f64)>> = Vec::new();
            let mut rows_g: Vec<Vec<(usize, f64)>> = Vec::new();
            let mut obs = Vec::new();
            for v in 0..n {
                if let Some(x) = self.data[v][t] {
                    rows_z.push(vec![(layout.pos(v, 0), 1.0)]);
                    rows_g.push(Vec::new());
                    obs.push(Some(x));
                }
            }
            for inst in &insts {
                rows_z.push(
                    inst.terms
                        .iter()
                        .map(|&(v, idx, w)| (layout.pos(v, t - idx), w))
                        .collect(),
                );
                rows_g.push(match layout.noisy[inst.row] {
                    Some(j) => vec![(n + j, noise_sd(inst.row))],
                    None => Vec::new(),
                });
                obs.push(Some(inst.value));
            }
            let m = obs.len();
            let mut zmat = DMatrix::zeros(m, dim);
            let mut gmat = DMatrix::zeros(m, k);
            for r in 0..m {
                for &(c, w) in &rows_z[r] {
                    zmat[(r, c)] += w;
                }
                for &(c, w) in &rows_g[r] {
                    gmat[(r, c)] += w;
                }
            }
            periods.push(Period {
                obs_intercept: DVector::zeros(m),
                obs_loading: zmat,
                obs_shock: gmat,
                state_intercept: d,
                transition: Arc::clone(&trans),
                state_shock: Arc::clone(&hmat),
            });
            observations.push(obs);
        }
        let system = StateSpaceSystem::new(dim, k, periods)?;
        let (init_mean, init_cov) = self.initial_moments(layout, params)?;
        Ok(BuiltSystem {
            system,
            observations,
            init_mean,
            init_cov,
        })
    }

    /// Moments of the state one period before the filter starts, conditioned
    /// on everything observed before that period.
    fn initial_moments(&self, layout: &Layout, params: &VarParameters) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let dim = layout.state_dim();
        let fill = self.initial_fill();
        let mut mean = DVector::zeros(dim);
        let mut cov = DMatrix::zeros(dim, dim);
        for v in 0..layout.n_vars {
            let col = fill.column(v);
            let m = col.mean();
            let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len().max(1) as f64;
            let v0 = self.init_variance_scale * (var + 1e-3);
            for lag in 0..layout.depth {
                let i = layout.pos(v, lag);
                mean[i] = m;
                cov[(i, i)] = v0;
            }
        }
        let base = layout.start - 1;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut values = Vec::new();
        let mut noise = Vec::new();
        for t in 0..layout.start {
            for v in 0..layout.n_vars {
                if let Some(x) = self.data[v][t] {
                    rows.push(vec![(layout.pos(v, base - t), 1.0)]);
                    values.push(x);
                    noise.push(0.0);
                }
            }
            for inst in self.instances(t)? {
                rows.push(
                    inst.terms
                        .iter()
                        .map(|&(v, idx, w)| (layout.pos(v, base - idx), w))
                        .collect(),
                );
                values.push(inst.value);
                noise.push(match self.rows[inst.row].slack() {
                    None => 0.0,
                    Some(Slack::Monthly) => params.sigma_cs_monthly,
                    Some(Slack::Quarterly) => params.sigma_cs_quarterly,
                });
            }
        }
        if rows.is_empty() {
            return Ok((mean, cov));
        }
        let mut zmat = DMatrix::zeros(rows.len(), dim);
        for (r, z) in rows.iter().enumerate() {
            for &(c, w) in z {
                zmat[(r, c)] += w;
            }
        }
        condition_gaussian(&mean, &cov, &zmat, &DVector::from_vec(values), &noise)
    }

    /// Complete `T x N` data matrix from a smoothed state path.
    pub fn complete(&self, layout: &Layout, path: &StatePath) -> DMatrix<f64> {
        let t_len = layout.len;
        let mut out = DMatrix::zeros(t_len, layout.n_vars);
        for v in 0..layout.n_vars {
            for t in 0..t_len {
                out[(t, v)] = if let Some(x) = self.data[v][t] {
                    x
                } else if t >= layout.start {
                    path.states[t - layout.start][layout.pos(v, 0)]
                } else {
                    path.initial[layout.pos(v, layout.start - 1 - t)]
                };
            }
        }
        out
    }

    /// Slack of every noisy restriction instance in `data`, by slack class.
    pub fn slack_residuals(&self, data: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut monthly = Vec::new();
        let mut quarterly = Vec::new();
        for t in 0..self.len() {
            for inst in self.instances(t)? {
                let Some(kind) = self.rows[inst.row].slack() else { continue };
                let fitted: f64 = inst.terms.iter().map(|&(v, idx, w)| w * data[(idx, v)]).sum();
                let r = inst.value - fitted;
                match kind {
                    Slack::Monthly => monthly.push(r),
                    Slack::Quarterly => quarterly.push(r),
                }
            }
        }
        Ok((monthly, quarterly))
    }

    /// Largest absolute residual of the exact restrictions in `data`.
    pub fn max_exact_residual(&self, data: &DMatrix<f64>) -> Result<f64> {
        let mut worst = 0.0f64;
        for t in 0..self.len() {
            for inst in self.instances(t)? {
                if !self.rows[inst.row].row.is_exact() {
                    continue;
                }
                let fitted: f64 = inst.terms.iter().map(|&(v, idx, w)| w * data[(idx, v)]).sum();
                worst = worst.max((inst.value - fitted).abs());
            }
        }
        Ok(worst)
    }

    pub fn exog_counts(&self) -> Vec<usize> {
        self.exog.iter().map(|e| e.ncols()).collect()
    }
}

/// Current position of one Gibbs chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub equations: Vec<EquationState>,
    pub params: VarParameters,
    pub data: DMatrix<f64>,
    /// Sweeps whose coefficient draws all failed the stationarity check.
    pub rejected_sweeps: u64,
}

/// Options of the parameter block of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub prior: PriorConfig,
    /// Keep the horseshoe scales at their current values.
    pub fixed_scales: bool,
    /// Keep the slack variances at their current values.
    pub fixed_slack: bool,
}

impl ChainState {
    /// Starting point: ridge estimates on the rough data completion.
    pub fn initial(problem: &BaseProblem) -> Result<Self> {
        let data = problem.initial_fill();
        let designs = build_designs(&data, problem.lags, &problem.exog)?;
        let equations = designs
            .iter()
            .map(EquationState::from_ridge)
            .collect::<Result<Vec<_>>>()?;
        let mut params = VarParameters::from_equations(problem.lags, &equations, &problem.exog_counts())?;
        let (mut cs_m, mut cs_q) = (None, None);
        for r in &problem.rows {
            match r.slack() {
                Some(Slack::Monthly) => cs_m = cs_m.or(Some(r.row.variance)),
                Some(Slack::Quarterly) => cs_q = cs_q.or(Some(r.row.variance)),
                None => {}
            }
        }
        params.sigma_cs_monthly = cs_m.unwrap_or(0.0);
        params.sigma_cs_quarterly = cs_q.unwrap_or(0.0);
        Ok(Self {
            equations,
            params,
            data,
            rejected_sweeps: 0,
        })
    }

    pub fn scales(&self) -> Vec<HorseshoeState> {
        self.equations.iter().map(|e| e.scales.clone()).collect()
    }

    /// Draws the latent data given the parameters.
    pub fn draw_states<R: Rng + ?Sized>(
        &mut self,
        problem: &BaseProblem,
        layout: &Layout,
        rng: &mut R,
    ) -> Result<()> {
        let built = problem.build(layout, &self.params)?;
        let path = simulation_smoother(
            &built.system,
            &built.observations,
            &built.init_mean,
            &built.init_cov,
            rng,
        )?;
        self.data = problem.complete(layout, &path);
        Ok(())
    }

    /// Draws parameters given the latent data. Equations use independent
    /// random streams seeded from `rng`, so results do not depend on
    /// scheduling.
    pub fn draw_parameters<R: Rng + ?Sized>(
        &mut self,
        problem: &BaseProblem,
        options: &SweepOptions,
        rng: &mut R,
    ) -> Result<()> {
        let designs = build_designs(&self.data, problem.lags, &problem.exog)?;
        let n = designs.len();
        let exog_counts = problem.exog_counts();
        let tag = |i: usize, e: Error| Error::NonFinite(format!("equation {i}: {e}"));

        if !options.fixed_scales {
            let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
            self.equations
                .par_iter_mut()
                .zip(seeds.par_iter())
                .for_each(|(eq, seed)| {
                    let mut eq_rng = ChaCha8Rng::seed_from_u64(*seed);
                    let theta = DVector::from_column_slice(&eq.theta);
                    eq.scales = draw_shrinkage_scales(&theta, eq.sigma2, &eq.scales, &mut eq_rng);
                });
        }

        let tries = if options.prior.stationary {
            options.prior.stationarity_tries.max(1)
        } else {
            1
        };
        let mut accepted = None;
        for _ in 0..tries {
            let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
            let thetas: Vec<Result<Vec<f64>>> = designs
                .par_iter()
                .zip(self.equations.par_iter())
                .zip(seeds.par_iter())
                .enumerate()
                .map(|(i, ((design, eq), seed))| {
                    let mut eq_rng = ChaCha8Rng::seed_from_u64(*seed);
                    draw_coefficients(design, &eq.scales, eq.sigma2, &mut eq_rng)
                        .map(|t| t.iter().copied().collect())
                        .map_err(|e| tag(i, e))
                })
                .collect();
            let thetas = thetas.into_iter().collect::<Result<Vec<_>>>()?;
            if !options.prior.stationary {
                accepted = Some(thetas);
                break;
            }
            let trial: Vec<EquationState> = self
                .equations
                .iter()
                .zip(&thetas)
                .map(|(eq, t)| EquationState {
                    theta: t.clone(),
                    sigma2: eq.sigma2,
                    scales: eq.scales.clone(),
                })
                .collect();
            let params = VarParameters::from_equations(problem.lags, &trial, &exog_counts)?;
            if params.spectral_radius() < 1.0 {
                accepted = Some(thetas);
                break;
            }
        }
        if let Some(thetas) = accepted {
            for (eq, t) in self.equations.iter_mut().zip(thetas) {
                eq.theta = t;
            }
        } else {
            self.rejected_sweeps += 1;
        }

        let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
        let sigmas: Vec<Result<f64>> = designs
            .par_iter()
            .zip(self.equations.par_iter())
            .zip(seeds.par_iter())
            .enumerate()
            .map(|(i, ((design, eq), seed))| {
                let mut eq_rng = ChaCha8Rng::seed_from_u64(*seed);
                let theta = DVector::from_column_slice(&eq.theta);
                draw_sigma2(design, &theta, &eq.scales, &options.prior, &mut eq_rng).map_err(|e| tag(i, e))
            })
            .collect();
        for (eq, s) in self.equations.iter_mut().zip(sigmas) {
            eq.sigma2 = s?;
        }
        let (cs_m, cs_q) = (self.params.sigma_cs_monthly, self.params.sigma_cs_quarterly);
        self.params = VarParameters::from_equations(problem.lags, &self.equations, &problem.exog_counts())?;
        self.params.sigma_cs_monthly = cs_m;
        self.params.sigma_cs_quarterly = cs_q;
        if !options.fixed_slack {
            let (m, q) = problem.slack_residuals(&self.data)?;
            if cs_m > 0.0 {
                self.params.sigma_cs_monthly = crate::prior::draw_sigma_cs(&m, &options.prior, rng)?;
            }
            if cs_q > 0.0 {
                self.params.sigma_cs_quarterly = crate::prior::draw_sigma_cs(&q, &options.prior, rng)?;
            }
        }
        Ok(())
    }

    /// One full sweep: latent data, then parameters.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        problem: &BaseProblem,
        layout: &Layout,
        options: &SweepOptions,
        rng: &mut R,
    ) -> Result<()> {
        self.draw_states(problem, layout, rng)?;
        self.draw_parameters(problem, options, rng)
    }
}

/// Diagnostics of a finished chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChainStats {
    pub clamp_events: u64,
    pub rejected_sweeps: u64,
}

/// A retained draw on the base axis.
#[derive(Debug, Clone)]
pub struct BaseDraw {
    pub params: VarParameters,
    pub scales: Vec<HorseshoeState>,
    pub data: DMatrix<f64>,
}

/// Burn-in, retention and thinning of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub retained: usize,
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 5000,
            retained: 5000,
            thin: 5,
        }
    }
}

impl McmcConfig {
    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.retained * self.thin.max(1)
    }
}

/// Progress callback: `(stage, sweep, total)`.
pub type Progress<'a> = &'a (dyn Fn(&str, usize, usize) + Sync);

/// Runs a chain. `before_sweep(sweep, problem)` may update restriction values
/// (e.g. pseudo-observations) ahead of each sweep.
pub(crate) fn run_chain<R: Rng + ?Sized>(
    problem: &mut BaseProblem,
    mcmc: &McmcConfig,
    prior: &PriorConfig,
    rng: &mut R,
    stage: &str,
    progress: Option<Progress<'_>>,
    before_sweep: &mut dyn FnMut(usize, &mut BaseProblem),
) -> Result<(Vec<BaseDraw>, ChainStats)> {
    if mcmc.retained == 0 {
        return Err(Error::NoRetainedDraws);
    }
    let thin = mcmc.thin.max(1);
    let layout = problem.layout()?;
    before_sweep(0, problem);
    let mut state = ChainState::initial(problem)?;
    let options = SweepOptions {
        prior: *prior,
        fixed_scales: false,
        fixed_slack: false,
    };
    let total = mcmc.total_sweeps();
    let mut draws = Vec::with_capacity(mcmc.retained);
    for sweep in 0..total {
        before_sweep(sweep, problem);
        state
            .sweep(problem, &layout, &options, rng)
            .map_err(|e| Error::ChainDivergence {
                sweep,
                detail: format!("{stage}: {e}"),
            })?;
        if state.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChainDivergence {
                sweep,
                detail: format!("{stage}: non-finite latent data"),
            });
        }
        if sweep >= mcmc.burn_in && (sweep - mcmc.burn_in + 1).is_multiple_of(thin) {
            draws.push(BaseDraw {
                params: state.params.clone(),
                scales: state.scales(),
                data: state.data.clone(),
            });
        }
        if let Some(report) = progress {
            report(stage, sweep + 1, total);
        }
    }
    let stats = ChainStats {
        clamp_events: state.equations.iter().map(|e| e.scales.clamp_events).sum(),
        rejected_sweeps: state.rejected_sweeps,
    };
    Ok((draws, stats))
}
