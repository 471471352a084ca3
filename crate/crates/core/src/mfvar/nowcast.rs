use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::base::ChainState;
use super::{monthly_exogenous, monthly_problem_for_draw, ModelSpec, PosteriorDrawSet};
use crate::aggregation::quarterly_monthly_weights;
use crate::error::{Error, Result};
use crate::linalg::standard_normal_vector;
use crate::panel::{Frequency, MixedFrequencyPanel};
use crate::prior::VarParameters;
use crate::time::{Month, Quarter};

/// Predictive sample of one target's quarterly growth, one value per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NowcastSample {
    pub series: String,
    pub quarter: Quarter,
    pub values: Vec<f64>,
}

impl NowcastSample {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Empirical quantile by linear interpolation.
    pub fn quantile(&self, prob: f64) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        let h = prob.clamp(0.0, 1.0) * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NowcastDistribution {
    pub samples: Vec<NowcastSample>,
}

impl NowcastDistribution {
    pub fn get(&self, series: &str, quarter: Quarter) -> Option<&NowcastSample> {
        self.samples
            .iter()
            .find(|s| s.series == series && s.quarter == quarter)
    }
}

/// Extends a completed `T x N` path by `horizon` periods from the VAR.
/// `exog` rows cover the extended axis.
pub fn simulate_forward<R: Rng + ?Sized>(
    params: &VarParameters,
    path: &DMatrix<f64>,
    exog: &[DMatrix<f64>],
    horizon: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (t_len, n) = path.shape();
    if horizon == 0 {
        return Ok(path.clone());
    }
    let p = params.n_lags();
    if t_len < p {
        return Err(Error::TooShort { needed: p, got: t_len });
    }
    if exog.len() != n || exog.iter().any(|e| e.nrows() < t_len + horizon) {
        return Err(Error::Dimension("exogenous rows must cover the forecast horizon".into()));
    }
    let ainv = params.a_inverse();
    let phis = params.reduced_lags();
    let impact = params.impact();
    let mut out = path.clone().resize_vertically(t_len + horizon, 0.0);
    for t in t_len..t_len + horizon {
        let mut s = DVector::from_column_slice(&params.intercept);
        for (i, e) in exog.iter().enumerate() {
            for c in 0..e.ncols() {
                s[i] += params.exogenous[i][c] * e[(t, c)];
            }
        }
        let mut y = &ainv * s + &impact * standard_normal_vector(n, rng);
        for (l, phi) in phis.iter().enumerate() {
            let lagged = out.row(t - l - 1).transpose();
            y += phi * lagged;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forecast path".into()));
        }
        out.set_row(t, &y.transpose());
    }
    Ok(out)
}

/// Predictive distributions of quarterly growth for `targets`: each draw's
/// completed path is extended past the data edge by the VAR and aggregated
/// with the quarterly/monthly weights.
pub fn nowcast<R: Rng + ?Sized>(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    draws: &PosteriorDrawSet,
    targets: &[(String, Quarter)],
    rng: &mut R,
) -> Result<NowcastDistribution> {
    if draws.is_empty() {
        return Err(Error::NoRetainedDraws);
    }
    if draws.start != panel.start() || draws.months != panel.len() {
        return Err(Error::InvalidInput(format!(
            "draws cover {}..{} but the panel covers {}..{}",
            draws.start,
            draws.end(),
            panel.start(),
            panel.end()
        )));
    }
    let w = quarterly_monthly_weights();
    let mut horizon = 0usize;
    let mut resolved = Vec::new();
    for (series, quarter) in targets {
        let v = draws.var_index(series)?;
        let end = quarter.end_month();
        if end.since(panel.start()) < (w.len() - 1) as i32 {
            return Err(Error::InvalidInput(format!(
                "target quarter {quarter} starts too close to the panel start"
            )));
        }
        if let Some(t) = panel.index_of(end) {
            let s = panel.require(series)?;
            if s.values[t].is_some() && s.meta.frequency_at(end) != Frequency::Monthly {
                return Err(Error::TargetObserved {
                    series: series.clone(),
                    quarter: quarter.to_string(),
                });
            }
        }
        horizon = horizon.max(end.since(panel.end()).max(0) as usize);
        resolved.push((v, end.since(panel.start()) as usize));
    }
    let exog = if horizon > 0 {
        monthly_exogenous(panel, spec, horizon)?
    } else {
        Vec::new()
    };
    let seeds: Vec<u64> = (0..draws.len()).map(|_| rng.gen()).collect();
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.len()); targets.len()];
    for (i, seed) in seeds.iter().enumerate() {
        let mut draw_rng = ChaCha8Rng::seed_from_u64(*seed);
        let path = if horizon > 0 {
            simulate_forward(&draws.params[i], &draws.paths[i], &exog, horizon, &mut draw_rng)?
        } else {
            draws.paths[i].clone()
        };
        for (k, &(v, end)) in resolved.iter().enumerate() {
            let q: f64 = w.iter().enumerate().map(|(lag, wk)| wk * path[(end - lag, v)]).sum();
            samples[k].push(q);
        }
    }
    Ok(NowcastDistribution {
        samples: targets
            .iter()
            .zip(samples)
            .map(|((series, quarter), values)| NowcastSample {
                series: series.clone(),
                quarter: *quarter,
                values,
            })
            .collect(),
    })
}

/// Re-estimation policy inside `[from, to)`: parameters stay at the draws
/// estimated before the window, latent paths are re-smoothed on new data.
#[derive(Debug, Clone)]
pub struct FreezePolicy {
    pub from: Month,
    pub to: Month,
    pub parameters: PosteriorDrawSet,
}

impl FreezePolicy {
    pub fn applies(&self, month: Month) -> bool {
        self.from <= month && month < self.to
    }
}

/// Freezes `draws` over the half-open window `[from, to)`.
pub fn freeze_parameters(draws: &PosteriorDrawSet, window: (Month, Month)) -> Result<FreezePolicy> {
    let (from, to) = window;
    if to < from {
        return Err(Error::InvalidInput(format!("empty freeze window {from}..{to}")));
    }
    if draws.is_empty() {
        return Err(Error::NoRetainedDraws);
    }
    Ok(FreezePolicy {
        from,
        to,
        parameters: draws.clone(),
    })
}

/// Keeps the parameter draws of `frozen` and redraws every latent path on
/// `panel`.
pub fn resmooth<R: Rng + ?Sized>(
    panel: &MixedFrequencyPanel,
    spec: &ModelSpec,
    frozen: &PosteriorDrawSet,
    rng: &mut R,
) -> Result<PosteriorDrawSet> {
    if frozen.is_empty() {
        return Err(Error::NoRetainedDraws);
    }
    let mut paths = Vec::with_capacity(frozen.len());
    let mut latent = vec![false; frozen.ids.len()];
    for (i, params) in frozen.params.iter().enumerate() {
        let k = frozen.quarterly_index.get(i).copied().unwrap_or(0);
        let problem = monthly_problem_for_draw(panel, spec, frozen.quarterly.as_ref(), k)?;
        let layout = problem.layout()?;
        for (l, d) in latent.iter_mut().zip(&problem.data) {
            *l = d.iter().any(|v| v.is_none());
        }
        let mut state = ChainState {
            equations: Vec::new(),
            params: params.clone(),
            data: DMatrix::zeros(0, 0),
            rejected_sweeps: 0,
        };
        state.draw_states(&problem, &layout, rng)?;
        paths.push(state.data);
    }
    Ok(PosteriorDrawSet {
        latent,
        start: panel.start(),
        months: panel.len(),
        vintage: panel.vintage().to_string(),
        paths,
        ..frozen.clone()
    })
}
