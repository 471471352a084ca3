#![allow(dead_code)]

pub mod toy;

use std::sync::Arc;

use mfbvar::statespace::{Observations, Period, StateSpaceSystem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Affine representation of every state and observation row of a system in
/// terms of the stacked vector `z = (s_{-1}, e_0, .., e_{T-1})`.
pub struct JointGaussian {
    pub state_dim: usize,
    z_mean: DVector<f64>,
    z_cov: DMatrix<f64>,
    /// Per state index `0..=T` (0 is `s_{-1}`): offset and loading on `z`.
    state_offset: Vec<DVector<f64>>,
    state_loading: Vec<DMatrix<f64>>,
    /// Per period: offsets and loadings of all measurement rows.
    obs_offset: Vec<DVector<f64>>,
    obs_loading: Vec<DMatrix<f64>>,
}

pub struct Conditional {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl JointGaussian {
    pub fn new(system: &StateSpaceSystem, init_mean: &DVector<f64>, init_cov: &DMatrix<f64>) -> Self {
        let n = system.state_dim;
        let k = system.shock_dim;
        let t_len = system.len();
        let d = n + t_len * k;
        let mut z_mean = DVector::zeros(d);
        z_mean.rows_mut(0, n).copy_from(init_mean);
        let mut z_cov = DMatrix::identity(d, d);
        z_cov.view_mut((0, 0), (n, n)).copy_from(init_cov);

        let mut offset = DVector::zeros(n);
        let mut loading = DMatrix::zeros(n, d);
        loading.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut state_offset = vec![offset.clone()];
        let mut state_loading = vec![loading.clone()];
        let mut obs_offset = Vec::new();
        let mut obs_loading = Vec::new();
        for (t, p) in system.periods.iter().enumerate() {
            let mut shock_sel = DMatrix::zeros(k, d);
            shock_sel.view_mut((0, n + t * k), (k, k)).fill_with_identity();
            offset = &p.state_intercept + p.transition.as_ref() * &offset;
            loading = p.transition.as_ref() * &loading + p.state_shock.as_ref() * &shock_sel;
            obs_offset.push(&p.obs_intercept + &p.obs_loading * &offset);
            obs_loading.push(&p.obs_loading * &loading + &p.obs_shock * &shock_sel);
            state_offset.push(offset.clone());
            state_loading.push(loading.clone());
        }
        Self {
            state_dim: n,
            z_mean,
            z_cov,
            state_offset,
            state_loading,
            obs_offset,
            obs_loading,
        }
    }

    /// Moments of the states with indices `states` (0 is `s_{-1}`, `t + 1`
    /// is `s_t`) given the observed rows of periods `0..=last_period`.
    pub fn condition(&self, obs: &Observations, last_period: Option<usize>, states: &[usize]) -> Conditional {
        let n = self.state_dim;
        let d = self.z_mean.len();
        let mut s_off = DVector::zeros(states.len() * n);
        let mut s_load = DMatrix::zeros(states.len() * n, d);
        for (i, &s) in states.iter().enumerate() {
            s_off.rows_mut(i * n, n).copy_from(&self.state_offset[s]);
            s_load.view_mut((i * n, 0), (n, d)).copy_from(&self.state_loading[s]);
        }
        let mut y_rows = Vec::new();
        let mut y_vals = Vec::new();
        if let Some(last) = last_period {
            for t in 0..=last {
                for (r, v) in obs[t].iter().enumerate() {
                    if let Some(v) = v {
                        y_rows.push((t, r));
                        y_vals.push(*v);
                    }
                }
            }
        }
        let prior_mean = &s_off + &s_load * &self.z_mean;
        let prior_cov = &s_load * &self.z_cov * s_load.transpose();
        if y_rows.is_empty() {
            return Conditional {
                mean: prior_mean,
                cov: prior_cov,
            };
        }
        let m = y_rows.len();
        let mut y_off = DVector::zeros(m);
        let mut y_load = DMatrix::zeros(m, d);
        for (i, &(t, r)) in y_rows.iter().enumerate() {
            y_off[i] = self.obs_offset[t][r];
            y_load.row_mut(i).copy_from(&self.obs_loading[t].row(r));
        }
        let y_mean = &y_off + &y_load * &self.z_mean;
        let syy = &y_load * &self.z_cov * y_load.transpose();
        let ssy = &s_load * &self.z_cov * y_load.transpose();
        let chol = syy.cholesky().expect("observation covariance must be positive definite");
        let resid = DVector::from_vec(y_vals) - y_mean;
        let gain = chol.solve(&ssy.transpose()).transpose();
        Conditional {
            mean: prior_mean + &gain * resid,
            cov: prior_cov - &gain * ssy.transpose(),
        }
    }

    /// Log density of all observed rows.
    pub fn loglik(&self, obs: &Observations) -> f64 {
        let d = self.z_mean.len();
        let mut off = Vec::new();
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        for (t, y) in obs.iter().enumerate() {
            for (r, v) in y.iter().enumerate() {
                if let Some(v) = v {
                    off.push(self.obs_offset[t][r]);
                    rows.push(self.obs_loading[t].row(r).clone_owned());
                    vals.push(*v);
                }
            }
        }
        if rows.is_empty() {
            return 0.0;
        }
        let m = rows.len();
        let mut load = DMatrix::zeros(m, d);
        for (i, r) in rows.iter().enumerate() {
            load.row_mut(i).copy_from(r);
        }
        let mean = DVector::from_vec(off) + &load * &self.z_mean;
        let cov = &load * &self.z_cov * load.transpose();
        let chol = cov.cholesky().expect("observation covariance must be positive definite");
        let resid = DVector::from_vec(vals) - mean;
        let quad = resid.dot(&chol.solve(&resid));
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
    }
}

pub fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random stable system with correlated measurement and state errors and a
/// time-varying measurement block.
pub fn random_system<R: Rng + ?Sized>(
    state_dim: usize,
    obs_dim: usize,
    periods: usize,
    rng: &mut R,
) -> StateSpaceSystem {
    let k = state_dim + obs_dim;
    let mut tm = normal_matrix(state_dim, state_dim, 0.4, rng);
    let radius = mfbvar::linalg::spectral_radius(&tm);
    if radius > 0.9 {
        tm *= 0.9 / radius;
    }
    let tm = Arc::new(tm);
    let hm = Arc::new(normal_matrix(state_dim, k, 0.6, rng));
    let periods = (0..periods)
        .map(|_| Period {
            obs_intercept: normal_vector(obs_dim, 0.5, rng),
            obs_loading: normal_matrix(obs_dim, state_dim, 1.0, rng),
            obs_shock: normal_matrix(obs_dim, k, 0.5, rng),
            state_intercept: normal_vector(state_dim, 0.3, rng),
            transition: Arc::clone(&tm),
            state_shock: Arc::clone(&hm),
        })
        .collect();
    StateSpaceSystem::new(state_dim, k, periods).unwrap()
}

/// Observations with each row missing with probability `p_missing`.
pub fn random_observations<R: Rng + ?Sized>(system: &StateSpaceSystem, p_missing: f64, rng: &mut R) -> Observations {
    system
        .periods
        .iter()
        .map(|p| {
            (0..p.n_rows())
                .map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    if rng.gen::<f64>() < p_missing {
                        None
                    } else {
                        Some(v)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_init<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
    let l = normal_matrix(n, n, 0.7, rng);
    (normal_vector(n, 1.0, rng), &l * l.transpose() + DMatrix::identity(n, n) * 0.5)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Monte-Carlo standard error of the mean of an autocorrelated sequence by
/// non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

/// Low-frequency growth from high-frequency growth by brute force: build
/// the log level path (zero before the first period), average it within
/// each block of `m` periods and difference consecutive block averages.
/// `t` is the last period of the block and must be at least `2m - 2`.
pub fn level_aggregated_growth(growth: &[f64], m: usize, t: usize) -> f64 {
    assert!(t + 2 >= 2 * m);
    let mut level = vec![0.0; growth.len() + 1];
    for (i, g) in growth.iter().enumerate() {
        level[i + 1] = level[i] + g;
    }
    let block = |end: usize| (0..m).map(|j| level[end - j]).sum::<f64>();
    (block(t + 1) - block(t + 1 - m)) / m as f64
}

pub struct SparseRecovery {
    /// Smallest `|posterior mean|` among the true nonzero coefficients.
    pub weakest_signal: f64,
    /// 90th percentile of `|posterior mean|` over the zero coefficients.
    pub junk_p90: f64,
    pub junk_count: usize,
    pub clamp_events: u64,
}

/// Horseshoe Gibbs sampling on a 10-variable VAR(5) with three nonzero lag
/// coefficients per equation (each of magnitude at least 0.4).
pub fn sparse_recovery_study(seed: u64) -> SparseRecovery {
    use mfbvar::prior::{build_designs, EquationState, PriorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const N: usize = 10;
    const P: usize = 5;
    const T: usize = 260;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // truth[l][i][j]: coefficient of y_{j,t-l-1} in equation i
    let mut truth = vec![vec![vec![0.0; N]; N]; P];
    for i in 0..N {
        truth[0][i][i] = 0.4;
        truth[0][i][(i + 1) % N] = -0.4;
        truth[1][i][(i + 1) % N] = 0.4;
    }
    let mut companion = DMatrix::zeros(N * P, N * P);
    for (l, m) in truth.iter().enumerate() {
        for i in 0..N {
            for j in 0..N {
                companion[(i, l * N + j)] = m[i][j];
            }
        }
    }
    for r in N..N * P {
        companion[(r, r - N)] = 1.0;
    }
    assert!(mfbvar::linalg::spectral_radius(&companion) < 0.9);

    let burn = 200;
    let mut data = DMatrix::zeros(T + burn, N);
    for t in P..T + burn {
        for i in 0..N {
            let mut v = 0.5 * rng.sample::<f64, _>(StandardNormal);
            for (l, m) in truth.iter().enumerate() {
                for j in 0..N {
                    v += m[i][j] * data[(t - l - 1, j)];
                }
            }
            data[(t, i)] = v;
        }
    }
    let data = data.rows(burn, T).clone_owned();
    let exog: Vec<DMatrix<f64>> = (0..N).map(|_| DMatrix::zeros(T, 0)).collect();
    let designs = build_designs(&data, P, &exog).unwrap();
    let prior = PriorConfig::default();
    let sweeps = 1500;
    let keep_from = 500;
    let mut states: Vec<EquationState> = designs.iter().map(|d| EquationState::from_ridge(d).unwrap()).collect();
    let mut sums: Vec<Vec<f64>> = designs.iter().map(|d| vec![0.0; d.n_coef()]).collect();
    for sweep in 0..sweeps {
        for (i, (st, d)) in states.iter_mut().zip(&designs).enumerate() {
            st.gibbs_step(d, &prior, &mut rng).unwrap();
            if sweep >= keep_from {
                for (s, v) in sums[i].iter_mut().zip(&st.theta) {
                    *s += v;
                }
            }
        }
    }
    let kept = (sweeps - keep_from) as f64;
    let mut signal = Vec::new();
    let mut junk = Vec::new();
    for (i, s) in sums.iter().enumerate() {
        for (c, total) in s.iter().enumerate() {
            let m = (total / kept).abs();
            // layout: [contemporaneous (i) | intercept | lag blocks]
            let is_signal = c > i && {
                let off = c - i - 1;
                let (l, j) = (off / N, off % N);
                truth[l][i][j] != 0.0
            };
            if is_signal {
                signal.push(m);
            } else {
                junk.push(m);
            }
        }
    }
    junk.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p90 = junk[((junk.len() as f64) * 0.9).floor() as usize];
    SparseRecovery {
        weakest_signal: signal.iter().cloned().fold(f64::INFINITY, f64::min),
        junk_p90: p90,
        junk_count: junk.len(),
        clamp_events: states.iter().map(|s| s.scales.clamp_events).sum(),
    }
}
