//! Linear-Gaussian state-space machinery with time-varying matrices,
//! arbitrary missing-observation patterns and correlated measurement/state
//! errors.
//!
//! The system at period `t` is
//!
//! ```text
//! y_t = c_t + Z_t s_t + G_t e_t
//! s_t = d_t + T_t s_{t-1} + H_t e_t,      e_t ~ N(0, I_k)
//! ```
//!
//! so `G_t H_t'` is the measurement/state error covariance. The initial
//! distribution given to the filter is that of `s_{-1}`, the state one
//! period before the first observation.
//!
//! Internally the filter works on the lagged state `a_t = s_{t-1}`, for
//! which the measurement equation reads
//! `y_t = (c_t + Z_t d_t) + Z_t T_t a_t + (Z_t H_t + G_t) e_t`, the form in
//! which the correlated-error Kalman recursions are standard.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{draw_gaussian, psd_factor, standard_normal_vector, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// System matrices for one period.
#[derive(Debug, Clone)]
pub struct Period {
    /// Measurement intercept `c_t` (rows).
    pub obs_intercept: DVector<f64>,
    /// Measurement loading `Z_t` (rows x state).
    pub obs_loading: DMatrix<f64>,
    /// Measurement shock loading `G_t` (rows x shocks).
    pub obs_shock: DMatrix<f64>,
    /// State intercept `d_t`.
    pub state_intercept: DVector<f64>,
    /// Transition `T_t`, usually shared across periods.
    pub transition: Arc<DMatrix<f64>>,
    /// State shock loading `H_t`, usually shared across periods.
    pub state_shock: Arc<DMatrix<f64>>,
}

impl Period {
    pub fn n_rows(&self) -> usize {
        self.obs_loading.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct StateSpaceSystem {
    pub state_dim: usize,
    pub shock_dim: usize,
    pub periods: Vec<Period>,
}

/// Per-period observation vectors; `None` marks a missing (masked) row.
pub type Observations = Vec<Vec<Option<f64>>>;

impl StateSpaceSystem {
    pub fn new(state_dim: usize, shock_dim: usize, periods: Vec<Period>) -> Result<Self> {
        let sys = Self {
            state_dim,
            shock_dim,
            periods,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.state_dim, self.shock_dim);
        for (t, p) in self.periods.iter().enumerate() {
            let r = p.obs_intercept.len();
            let ok = p.obs_loading.shape() == (r, n)
                && p.obs_shock.shape() == (r, k)
                && p.state_intercept.len() == n
                && p.transition.shape() == (n, n)
                && p.state_shock.shape() == (n, k);
            if !ok {
                return Err(Error::Dimension(format!(
                    "period {t}: system matrices not conformable with state {n}, shocks {k}, rows {r}"
                )));
            }
        }
        Ok(())
    }

    /// Copy of the system with every intercept set to zero.
    pub fn without_constants(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.periods {
            p.obs_intercept.fill(0.0);
            p.state_intercept.fill(0.0);
        }
        out
    }

    fn check_observations(&self, obs: &[Vec<Option<f64>>]) -> Result<()> {
        if obs.len() != self.periods.len() {
            return Err(Error::Dimension(format!(
                "{} observation periods for a {}-period system",
                obs.len(),
                self.periods.len()
            )));
        }
        for (t, (y, p)) in obs.iter().zip(&self.periods).enumerate() {
            if y.len() != p.n_rows() {
                return Err(Error::Dimension(format!(
                    "period {t}: {} observations for {} measurement rows",
                    y.len(),
                    p.n_rows()
                )));
            }
            if y.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observation at period {t}")));
            }
        }
        Ok(())
    }

    fn check_init(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
        let n = self.state_dim;
        if mean.len() != n || cov.shape() != (n, n) {
            return Err(Error::Dimension("initial state moments".into()));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state moments".into()));
        }
        Ok(())
    }
}

/// Output of [`kalman_filter`], indexed by period.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub predicted_mean: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub filtered_mean: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    pub loglik_contributions: Vec<f64>,
    pub loglik: f64,
}

/// Gain quantities of one period; they do not depend on the data values.
struct Step {
    observed: Vec<usize>,
    /// Covariance of the lagged state `a_t` given earlier data.
    p: DMatrix<f64>,
    /// `Z_t T_t` restricted to observed rows.
    zt: DMatrix<f64>,
    f_chol: Option<Cholesky<f64, Dyn>>,
    log_det_f: f64,
    gain: DMatrix<f64>,
}

struct Gains {
    steps: Vec<Step>,
    final_p: DMatrix<f64>,
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn compute_gains(
    sys: &StateSpaceSystem,
    obs: &[Vec<Option<f64>>],
    init_cov: &DMatrix<f64>,
) -> Result<Gains> {
    let n = sys.state_dim;
    let mut p = init_cov.clone();
    symmetrize(&mut p);
    let mut steps = Vec::with_capacity(sys.len());
    for (t, (period, y)) in sys.periods.iter().zip(obs).enumerate() {
        let observed: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
        let tm = period.transition.as_ref();
        let hm = period.state_shock.as_ref();
        let tp = tm * &p;
        let mut p_next = &tp * tm.transpose() + hm * hm.transpose();
        let (zt, f_chol, log_det_f, gain) = if observed.is_empty() {
            (
                DMatrix::zeros(0, n),
                None,
                0.0,
                DMatrix::zeros(n, 0),
            )
        } else {
            let z = select_rows(&period.obs_loading, &observed);
            let g = select_rows(&period.obs_shock, &observed);
            let zt = &z * tm;
            let gt = &z * hm + g;
            let pzt = &p * zt.transpose();
            let mut f = &zt * &pzt + &gt * gt.transpose();
            symmetrize(&mut f);
            let m = &tp * zt.transpose() + hm * gt.transpose();
            let chol = f.cholesky().ok_or_else(|| {
                Error::Singular(format!("innovation covariance at period {t}"))
            })?;
            let log_det_f = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let gain = chol.solve(&m.transpose()).transpose();
            p_next -= &gain * m.transpose();
            (zt, Some(chol), log_det_f, gain)
        };
        symmetrize(&mut p_next);
        if p_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state covariance at period {t}")));
        }
        steps.push(Step {
            observed,
            p,
            zt,
            f_chol,
            log_det_f,
            gain,
        });
        p = p_next;
    }
    Ok(Gains {
        steps,
        final_p: p,
    })
}

/// Data-dependent part of the filter: predicted lagged-state means and innovations.
struct Innovations {
    /// `a_t` for t = 0..=T (the last is the filtered final state).
    means: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
}

fn run_innovations(
    sys: &StateSpaceSystem,
    gains: &Gains,
    obs: &[Vec<Option<f64>>],
    init_mean: &DVector<f64>,
    with_constants: bool,
) -> Innovations {
    let mut a = init_mean.clone();
    let mut means = Vec::with_capacity(sys.len() + 1);
    let mut vs = Vec::with_capacity(sys.len());
    for ((period, step), y) in sys.periods.iter().zip(&gains.steps).zip(obs) {
        let tm = period.transition.as_ref();
        let mut next = tm * &a;
        if with_constants {
            next += &period.state_intercept;
        }
        let v = if step.observed.is_empty() {
            DVector::zeros(0)
        } else {
            let mut v = DVector::from_iterator(
                step.observed.len(),
                step.observed.iter().map(|&i| y[i].unwrap_or(0.0)),
            );
            v -= &step.zt * &a;
            if with_constants {
                let zd = &period.obs_loading * &period.state_intercept;
                for (j, &i) in step.observed.iter().enumerate() {
                    v[j] -= period.obs_intercept[i] + zd[i];
                }
            }
            next += &step.gain * &v;
            v
        };
        means.push(a);
        vs.push(v);
        a = next;
    }
    means.push(a);
    Innovations { means, v: vs }
}

/// Smoothed lagged states `E[a_t | all data]`, t = 0..=T.
fn smooth_lagged(sys: &StateSpaceSystem, gains: &Gains, inn: &Innovations) -> Vec<DVector<f64>> {
    let n = sys.state_dim;
    let big_t = sys.len();
    let mut out = vec![DVector::zeros(n); big_t + 1];
    let mut r = DVector::zeros(n);
    out[big_t] = &inn.means[big_t] + &gains.final_p * &r;
    for t in (0..big_t).rev() {
        let step = &gains.steps[t];
        let tm = sys.periods[t].transition.as_ref();
        // r_{t-1} = Z~' F^{-1} v + (T - K Z~)' r_t
        let mut r_prev = tm.transpose() * &r;
        if let Some(chol) = &step.f_chol {
            let kr = step.gain.transpose() * &r;
            let u = chol.solve(&inn.v[t]) - kr;
            r_prev += step.zt.transpose() * u;
        }
        r = r_prev;
        out[t] = &inn.means[t] + &step.p * &r;
    }
    out
}

/// Exact Gaussian filtering under the observation mask.
pub fn kalman_filter(
    system: &StateSpaceSystem,
    observations: &[Vec<Option<f64>>],
    init_mean: &DVector<f64>,
    init_cov: &DMatrix<f64>,
) -> Result<FilterResult> {
    system.check_observations(observations)?;
    system.check_init(init_mean, init_cov)?;
    let gains = compute_gains(system, observations, init_cov)?;
    let inn = run_innovations(system, &gains, observations, init_mean, true);
    let big_t = system.len();
    let mut res = FilterResult {
        predicted_mean: Vec::with_capacity(big_t),
        predicted_cov: Vec::with_capacity(big_t),
        filtered_mean: Vec::with_capacity(big_t),
        filtered_cov: Vec::with_capacity(big_t),
        loglik_contributions: Vec::with_capacity(big_t),
        loglik: 0.0,
    };
    for t in 0..big_t {
        let period = &system.periods[t];
        let step = &gains.steps[t];
        let tm = period.transition.as_ref();
        let hm = period.state_shock.as_ref();
        res.predicted_mean
            .push(&period.state_intercept + tm * &inn.means[t]);
        let mut pc = tm * &step.p * tm.transpose() + hm * hm.transpose();
        symmetrize(&mut pc);
        res.predicted_cov.push(pc);
        res.filtered_mean.push(inn.means[t + 1].clone());
        let next_p = if t + 1 < big_t {
            gains.steps[t + 1].p.clone()
        } else {
            gains.final_p.clone()
        };
        res.filtered_cov.push(next_p);
        let ll = match &step.f_chol {
            None => 0.0,
            Some(chol) => {
                let v = &inn.v[t];
                let quad = v.dot(&chol.solve(v));
                -0.5 * (v.len() as f64 * LN_2PI + step.log_det_f + quad)
            }
        };
        res.loglik += ll;
        res.loglik_contributions.push(ll);
    }
    Ok(res)
}

/// Smoothed state path: `initial` is `E[s_{-1} | y]`, `states[t]` is `E[s_t | y]`.
#[derive(Debug, Clone)]
pub struct StatePath {
    pub initial: DVector<f64>,
    pub states: Vec<DVector<f64>>,
}

fn split_path(mut lagged: Vec<DVector<f64>>) -> StatePath {
    let states = lagged.split_off(1);
    StatePath {
        initial: lagged.pop().expect("at least the initial state"),
        states,
    }
}

/// `E[s_t | all observations]` for every period.
pub fn smooth_mean(
    system: &StateSpaceSystem,
    observations: &[Vec<Option<f64>>],
    init_mean: &DVector<f64>,
    init_cov: &DMatrix<f64>,
) -> Result<StatePath> {
    system.check_observations(observations)?;
    system.check_init(init_mean, init_cov)?;
    let gains = compute_gains(system, observations, init_cov)?;
    let inn = run_innovations(system, &gains, observations, init_mean, true);
    Ok(split_path(smooth_lagged(system, &gains, &inn)))
}

/// Simulates an unconditional state path and pseudo-observations (all rows).
pub fn simulate<R: Rng + ?Sized>(
    system: &StateSpaceSystem,
    init_mean: &DVector<f64>,
    init_factor: &DMatrix<f64>,
    rng: &mut R,
) -> (StatePath, Vec<DVector<f64>>) {
    let mut s = draw_gaussian(init_mean, init_factor, rng);
    let initial = s.clone();
    let mut states = Vec::with_capacity(system.len());
    let mut ys = Vec::with_capacity(system.len());
    for period in &system.periods {
        let e = standard_normal_vector(system.shock_dim, rng);
        let next = &period.state_intercept
            + period.transition.as_ref() * &s
            + period.state_shock.as_ref() * &e;
        let y = &period.obs_intercept + &period.obs_loading * &next + &period.obs_shock * &e;
        states.push(next.clone());
        ys.push(y);
        s = next;
    }
    (StatePath { initial, states }, ys)
}

/// One draw from `p(s_{-1:T-1} | y)` by mean correction: simulate a pseudo
/// path and pseudo-data, smooth the data difference in the system with all
/// constants removed, and add the result to the pseudo path.
pub fn simulation_smoother<R: Rng + ?Sized>(
    system: &StateSpaceSystem,
    observations: &[Vec<Option<f64>>],
    init_mean: &DVector<f64>,
    init_cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<StatePath> {
    system.check_observations(observations)?;
    system.check_init(init_mean, init_cov)?;
    let gains = compute_gains(system, observations, init_cov)?;
    let init_factor = psd_factor(init_cov)?;
    let (plus, y_plus) = simulate(system, init_mean, &init_factor, rng);
    let diff: Observations = observations
        .iter()
        .zip(&y_plus)
        .map(|(y, yp)| {
            y.iter()
                .enumerate()
                .map(|(i, v)| v.map(|x| x - yp[i]))
                .collect()
        })
        .collect();
    let zero = DVector::zeros(system.state_dim);
    let inn = run_innovations(system, &gains, &diff, &zero, false);
    let corr = smooth_lagged(system, &gains, &inn);
    let mut corr = split_path(corr);
    corr.initial += &plus.initial;
    for (c, p) in corr.states.iter_mut().zip(&plus.states) {
        *c += p;
    }
    if corr
        .states
        .iter()
        .chain(std::iter::once(&corr.initial))
        .any(|s| s.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("simulation smoother draw".into()));
    }
    Ok(corr)
}
