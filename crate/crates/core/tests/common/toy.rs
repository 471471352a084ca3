//! Two-series toy mixed-frequency VAR: `x` monthly, `z` latent apart from a
//! pinned first value and quarterly averages.

use mfbvar::aggregation::{quarterly_monthly_row, quarterly_monthly_weights};
use mfbvar::mfvar::{BaseProblem, BoundRow, ChainState, SweepOptions};
use mfbvar::prior::{EquationState, HorseshoeState, PriorConfig, VarParameters};
use mfbvar::time::Month;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};

use super::{batch_means_se, mean, variance};

pub const T: usize = 40;
pub const PINNED: [f64; 2] = [0.5, -0.2];
pub const LOCAL_SCALE: f64 = 0.02;
pub const SIGMA_SHAPE: f64 = 6.0;
pub const SIGMA_SCALE: f64 = 5.0;
/// Period whose latent value enters the test functions.
pub const PROBE: usize = 20;

pub fn prior() -> PriorConfig {
    PriorConfig {
        sigma_shape: SIGMA_SHAPE,
        sigma_scale: SIGMA_SCALE,
        stationary: false,
        ..PriorConfig::default()
    }
}

pub fn fixed_scales(k: usize) -> HorseshoeState {
    HorseshoeState {
        tau2: 1.0,
        lambda2: vec![LOCAL_SCALE; k],
        clamp_events: 0,
    }
}

/// Equation states drawn from the prior: `sigma2 ~ IG`, `theta ~ N(0, sigma2 * scale)`.
pub fn prior_draw(rng: &mut ChaCha8Rng) -> Vec<EquationState> {
    (0..2)
        .map(|i| {
            let k = i + 3;
            let g: f64 = rng.sample(Gamma::new(SIGMA_SHAPE, 1.0 / SIGMA_SCALE).unwrap());
            let sigma2 = 1.0 / g;
            let sd = (sigma2 * LOCAL_SCALE).sqrt();
            EquationState {
                theta: (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect(),
                sigma2,
                scales: fixed_scales(k),
            }
        })
        .collect()
}

/// Forward simulation of the recursive structural system from the pinned start.
/// Equation 0: `[c, b00, b01]`; equation 1: `[a10, c, b10, b11]` with
/// `y1 = -a10 y0 + c + b10 y0(-1) + b11 y1(-1) + e1`.
pub fn simulate_data(eqs: &[EquationState], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    simulate_data_len(eqs, T, rng)
}

pub fn simulate_data_len(eqs: &[EquationState], t_len: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(t_len, 2);
    y[(0, 0)] = PINNED[0];
    y[(0, 1)] = PINNED[1];
    for t in 1..t_len {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let (a, b) = (&eqs[0].theta, &eqs[1].theta);
        let y0 = a[0] + a[1] * y[(t - 1, 0)] + a[2] * y[(t - 1, 1)] + eqs[0].sigma2.sqrt() * e0;
        let y1 = -b[0] * y0 + b[1] + b[2] * y[(t - 1, 0)] + b[3] * y[(t - 1, 1)] + eqs[1].sigma2.sqrt() * e1;
        y[(t, 0)] = y0;
        y[(t, 1)] = y1;
    }
    y
}

pub fn is_quarter_end(t: usize) -> bool {
    t % 3 == 2 && t >= 4
}

/// Problem whose observed part is taken from `full`: the first series
/// monthly, the second only at `t = 0` and through quarterly averages.
pub fn problem_from(full: &DMatrix<f64>) -> BaseProblem {
    let w = quarterly_monthly_weights();
    let t_len = full.nrows();
    let values = (0..t_len)
        .map(|t| is_quarter_end(t).then(|| (0..5).map(|l| w[l] * full[(t - l, 1)]).sum()))
        .collect();
    BaseProblem {
        ids: vec!["x".into(), "z".into()],
        period_ends: (0..t_len).map(|t| Month::new(2000, 1).offset(t as i32)).collect(),
        data: vec![
            (0..t_len).map(|t| Some(full[(t, 0)])).collect(),
            (0..t_len).map(|t| (t == 0).then_some(full[(0, 1)])).collect(),
        ],
        rows: vec![BoundRow {
            row: quarterly_monthly_row("zq", "z").unwrap(),
            values,
        }],
        exog: vec![DMatrix::zeros(t_len, 0); 2],
        lags: 1,
        init_variance_scale: 10.0,
    }
}

pub fn test_functions(eqs: &[EquationState], data: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for e in eqs {
        for v in &e.theta {
            out.push(*v);
            out.push(v * v);
        }
        out.push(e.sigma2);
    }
    out.push(data[(PROBE, 1)]);
    out.push(data[(PROBE, 1)].powi(2));
    out
}

/// Geweke comparison of marginal-conditional and successive-conditional
/// simulators; one z-score per scalar test function.
pub fn geweke_z_scores(seed: u64, forward_n: usize, sweeps: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forward: Vec<Vec<f64>> = Vec::new();
    for _ in 0..forward_n {
        let eqs = prior_draw(&mut rng);
        let data = simulate_data(&eqs, &mut rng);
        forward.push(test_functions(&eqs, &data));
    }

    let options = SweepOptions {
        prior: prior(),
        fixed_scales: true,
        fixed_slack: true,
    };
    let eqs = prior_draw(&mut rng);
    let mut full = simulate_data(&eqs, &mut rng);
    let mut problem = problem_from(&full);
    let layout = problem.layout().unwrap();
    let mut chain = ChainState::initial(&problem).unwrap();
    chain.params = VarParameters::from_equations(1, &eqs, &[0, 0]).unwrap();
    chain.equations = eqs;
    chain.data = full.clone();
    let mut gibbs: Vec<Vec<f64>> = Vec::new();
    for _ in 0..sweeps {
        chain.draw_states(&problem, &layout, &mut rng).unwrap();
        let latent_probe = chain.data.clone();
        chain.draw_parameters(&problem, &options, &mut rng).unwrap();
        gibbs.push(test_functions(&chain.equations, &latent_probe));
        full = simulate_data(&chain.equations, &mut rng);
        problem = problem_from(&full);
        chain.data = full.clone();
    }

    let n_fun = forward[0].len();
    (0..n_fun)
        .map(|f| {
            let a: Vec<f64> = forward.iter().map(|v| v[f]).collect();
            let b: Vec<f64> = gibbs.iter().map(|v| v[f]).collect();
            let se_a = (variance(&a) / a.len() as f64).sqrt();
            let se_b = batch_means_se(&b, 50);
            (mean(&a) - mean(&b)) / (se_a * se_a + se_b * se_b).sqrt()
        })
        .collect()
}
