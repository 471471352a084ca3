mod common;

use common::toy::*;
use mfbvar::aggregation::{quarterly_monthly_row, quarterly_monthly_weights};
use mfbvar::mfvar::{BaseProblem, BoundRow, ChainState, SweepOptions};
use mfbvar::prior::{EquationState, PriorConfig, VarParameters};
use mfbvar::time::Month;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn gibbs_sampler_reproduces_the_joint_distribution() {
    let z = geweke_z_scores(31, 20_000, 30_000);
    for (f, z) in z.iter().enumerate() {
        assert!(z.abs() < 3.0, "test function {f}: z = {z}");
    }
}

#[test]
fn smoothed_draws_satisfy_the_quarterly_average_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eqs = prior_draw(&mut rng);
    let full = simulate_data(&eqs, &mut rng);
    let problem = problem_from(&full);
    let layout = problem.layout().unwrap();
    let mut chain = ChainState::initial(&problem).unwrap();
    let options = SweepOptions {
        prior: PriorConfig::default(),
        fixed_scales: false,
        fixed_slack: false,
    };
    let w = quarterly_monthly_weights();
    for _ in 0..50 {
        chain.sweep(&problem, &layout, &options, &mut rng).unwrap();
        assert!(problem.max_exact_residual(&chain.data).unwrap() < 1e-8);
        for t in (0..T).filter(|t| is_quarter_end(*t)) {
            let avg: f64 = (0..5).map(|l| w[l] * chain.data[(t - l, 1)]).sum();
            let obs = problem.rows[0].values[t].unwrap();
            assert!((avg - obs).abs() < 1e-8);
        }
        assert!((chain.data[(0, 1)] - PINNED[1]).abs() < 1e-10);
        let known = DVector::from_iterator(T, (0..T).map(|t| full[(t, 0)]));
        assert_eq!(chain.data.column(0).clone_owned(), known);
    }
}

mod assembly {
    use mfbvar::aggregation::{RowKind, Target};
    use mfbvar::mfvar::{monthly_problem, BaseProblem, ChainState};
    use mfbvar::prior::VarParameters;
    use mfbvar::simulate::{simulate, DgpConfig};
    use mfbvar::statespace::kalman_filter;
    use nalgebra::{DMatrix, DVector};

    /// Affine expression `c + a'u`.
    #[derive(Clone)]
    struct Affine {
        c: f64,
        a: DVector<f64>,
    }

    /// Log density of every measurement of `problem` after the pre-sample,
    /// assembled directly from the VAR recursion on the stacked vector
    /// `u = (initial state, structural shocks, slack shocks)`.
    fn dense_loglik(problem: &BaseProblem, params: &VarParameters, init_mean: &DVector<f64>, init_cov: &DMatrix<f64>) -> f64 {
        let layout = problem.layout().unwrap();
        let n = problem.ids.len();
        let t_len = problem.len();
        let start = layout.start;
        let dim = init_mean.len();
        let mut n_slack = 0;
        for t in start..t_len {
            for r in &problem.rows {
                if !r.row.is_exact() && r.values[t].is_some() {
                    n_slack += 1;
                }
            }
        }
        let n_u = dim + (t_len - start) * n + n_slack;
        let zero = Affine { c: 0.0, a: DVector::zeros(n_u) };
        let mut y: Vec<Vec<Option<Affine>>> = vec![vec![None; t_len]; n];
        for t in 0..start {
            for v in 0..n {
                // initial state stacks lags of every variable, most recent first
                let lag = start - 1 - t;
                if lag < layout.depth {
                    let mut a = zero.clone();
                    a.a[lag * n + v] = 1.0;
                    y[v][t] = Some(a);
                }
            }
        }
        let ainv = params.a_inverse();
        let phis = params.reduced_lags();
        let impact = params.impact();
        for t in start..t_len {
            let mut s = DVector::from_column_slice(&params.intercept);
            for (i, e) in problem.exog.iter().enumerate() {
                for c in 0..e.ncols() {
                    s[i] += params.exogenous[i][c] * e[(t, c)];
                }
            }
            let c_t = &ainv * s;
            for v in 0..n {
                let mut out = Affine { c: c_t[v], ..zero.clone() };
                for (l, phi) in phis.iter().enumerate() {
                    for j in 0..n {
                        let prev = y[j][t - l - 1].as_ref().expect("lag inside the axis");
                        out.c += phi[(v, j)] * prev.c;
                        out.a += phi[(v, j)] * &prev.a;
                    }
                }
                for j in 0..n {
                    out.a[dim + (t - start) * n + j] += impact[(v, j)];
                }
                y[v][t] = Some(out);
            }
        }
        let idx = |id: &str| problem.ids.iter().position(|s| s == id).unwrap();
        let mut meas: Vec<(Affine, f64)> = Vec::new();
        let mut slack = dim + (t_len - start) * n;
        for t in start..t_len {
            for v in 0..n {
                if let Some(x) = problem.data[v][t] {
                    meas.push((y[v][t].clone().unwrap(), x));
                }
            }
            for r in &problem.rows {
                let Some(value) = r.values[t] else { continue };
                if r.row.terms.iter().any(|term| term.lag > t) {
                    continue;
                }
                let mut m = zero.clone();
                for term in &r.row.terms {
                    let e = y[idx(&term.latent)][t - term.lag].as_ref().unwrap();
                    m.c += term.weight * e.c;
                    m.a += term.weight * &e.a;
                }
                if let Target::Latent(id) = &r.row.target {
                    let e = y[idx(id)][t].as_ref().unwrap();
                    m.c -= e.c;
                    m.a -= &e.a;
                }
                if !r.row.is_exact() {
                    let var = if r.row.kind == RowKind::CrossSectionalMonthly {
                        params.sigma_cs_monthly
                    } else {
                        params.sigma_cs_quarterly
                    };
                    m.a[slack] = var.sqrt();
                    slack += 1;
                }
                meas.push((m, value));
            }
        }
        let k = meas.len();
        let mut u_cov = DMatrix::identity(n_u, n_u);
        u_cov.view_mut((0, 0), (dim, dim)).copy_from(init_cov);
        let mut u_mean = DVector::zeros(n_u);
        u_mean.rows_mut(0, dim).copy_from(init_mean);
        let loading = DMatrix::from_fn(k, n_u, |r, c| meas[r].0.a[c]);
        let resid = DVector::from_fn(k, |r, _| meas[r].1 - meas[r].0.c - meas[r].0.a.dot(&u_mean));
        let cov = &loading * u_cov * loading.transpose();
        let chol = cov.cholesky().expect("measurement covariance is positive definite");
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = resid.dot(&chol.solve(&resid));
        -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
    }

    #[test]
    fn system_likelihood_matches_dense_assembly() {
        let dgp = DgpConfig { months: 48, ..DgpConfig::default() };
        let sim = simulate(&dgp).unwrap();
        let mut spec = sim.full_spec();
        spec.lags = 2;
        let problem = monthly_problem(&sim.panel, &spec, None).unwrap();
        let layout = problem.layout().unwrap();
        let mut params = ChainState::initial(&problem).unwrap().params;
        params.sigma_cs_monthly = params.sigma_cs_monthly.max(0.01);
        params.sigma_cs_quarterly = params.sigma_cs_quarterly.max(0.01);
        let built = problem.build(&layout, &params).unwrap();
        let filtered = kalman_filter(&built.system, &built.observations, &built.init_mean, &built.init_cov).unwrap();
        assert!(filtered.loglik.is_finite());
        let dense = dense_loglik(&problem, &params, &built.init_mean, &built.init_cov);
        assert!(
            (filtered.loglik - dense).abs() < 1e-8,
            "filter {} vs dense {}",
            filtered.loglik,
            dense
        );
    }
}

mod estimation {
    use mfbvar::aggregation::{annual_monthly_weights, quarterly_monthly_weights};
    use mfbvar::mfvar::{estimate, run_step1_quarterly, write_draws, McmcConfig, ModelSpec};
    use mfbvar::panel::Frequency;
    use mfbvar::simulate::{simulate, state_output_id, DgpConfig, SimulatedData, NATIONAL_OUTPUT};
    use mfbvar::time::Month;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(burn_in: usize, retained: usize) -> McmcConfig {
        McmcConfig { burn_in, retained, thin: 1 }
    }

    fn break_panel(months: usize, seed: u64) -> SimulatedData {
        simulate(&DgpConfig {
            seed,
            months,
            frequency_break: Some(Month::new(1994, 1)),
            ..DgpConfig::default()
        })
        .unwrap()
    }

    fn small_spec(sim: &SimulatedData, mcmc: McmcConfig) -> ModelSpec {
        let mut spec = sim.full_spec();
        spec.lags = 2;
        spec.mcmc = mcmc;
        spec.seed = 7;
        spec
    }

    #[test]
    fn same_seed_gives_identical_draws() {
        let sim = break_panel(72, 3);
        let spec = small_spec(&sim, chain(20, 10));
        let a = estimate(&sim.panel, &spec).unwrap();
        let b = estimate(&sim.panel, &spec).unwrap();
        assert_eq!(a, b);
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_draws(&a, &mut ba).unwrap();
        write_draws(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let other = estimate(&sim.panel, &ModelSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.paths, other.paths);
    }

    #[test]
    fn retained_draws_satisfy_the_aggregation_identities() {
        let sim = break_panel(96, 4);
        let spec = small_spec(&sim, chain(60, 30));
        let draws = estimate(&sim.panel, &spec).unwrap();
        assert!(draws.quarterly.is_some());
        let wq = quarterly_monthly_weights();
        let wa = annual_monthly_weights();
        let mut checked = (0, 0);
        for id in std::iter::once(NATIONAL_OUTPUT.to_string()).chain((0..3).map(state_output_id)) {
            let series = sim.panel.get(&id).unwrap();
            let v = draws.var_index(&id).unwrap();
            for (t, value) in series.values.iter().enumerate() {
                let Some(value) = value else { continue };
                let month = sim.panel.month_at(t);
                let (weights, min_t) = match series.meta.frequency_at(month) {
                    Frequency::Quarterly => (&wq, 4),
                    Frequency::Annual => (&wa, 22),
                    Frequency::Monthly => unreachable!(),
                };
                if t < min_t {
                    continue;
                }
                for path in &draws.paths {
                    let agg: f64 = weights.iter().enumerate().map(|(l, w)| w * path[(t - l, v)]).sum();
                    assert!((agg - value).abs() < 1e-8, "{id} at {month}: {agg} vs {value}");
                }
                if weights.len() == wq.len() {
                    checked.0 += 1;
                } else {
                    checked.1 += 1;
                }
            }
        }
        assert!(checked.0 > 20 && checked.1 >= 3 * 2, "checked {checked:?}");
    }

    #[test]
    fn quarterly_step_recovers_the_latent_quarters() {
        let sim = simulate(&DgpConfig {
            seed: 12,
            states: 2,
            months: 120,
            frequency_break: Some(Month::new(1996, 1)),
            ..DgpConfig::default()
        })
        .unwrap();
        let spec = small_spec(&sim, chain(1000, 4000));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = run_step1_quarterly(&sim.panel, &spec, &spec.mcmc, &mut rng).unwrap();
        let w = quarterly_monthly_weights();
        let (mut inside, mut total) = (0, 0);
        for (j, id) in q.ids.iter().enumerate() {
            let truth = sim.truth_of(id).unwrap();
            for (i, quarter) in q.quarters.iter().enumerate() {
                let t = sim.panel.index_of(quarter.end_month()).unwrap();
                if t < 4 {
                    continue;
                }
                let true_q: f64 = (0..5).map(|l| w[l] * truth[t - l]).sum();
                let xs: Vec<f64> = q.draws.iter().map(|d| d[(i, j)]).collect();
                let m = super::common::mean(&xs);
                let sd = super::common::variance(&xs).sqrt();
                total += 1;
                if (m - true_q).abs() <= 2.0 * sd {
                    inside += 1;
                }
            }
        }
        assert!(total >= 40);
        assert!(inside as f64 >= 0.9 * total as f64, "{inside} of {total} within two posterior s.d.");
    }

    #[test]
    fn states_add_up_to_the_latent_national_path() {
        let sim = simulate(&DgpConfig {
            seed: 2,
            states: 2,
            weights: vec![0.5, 0.5],
            months: 72,
            ..DgpConfig::default()
        })
        .unwrap();
        let spec = small_spec(&sim, chain(300, 200));
        let draws = estimate(&sim.panel, &spec).unwrap();
        let nat = draws.var_index(NATIONAL_OUTPUT).unwrap();
        let s: Vec<usize> = (0..2).map(|i| draws.var_index(&state_output_id(i)).unwrap()).collect();
        let mut resid_sd = Vec::new();
        let mut cs_sd = Vec::new();
        for (path, params) in draws.paths.iter().zip(&draws.params) {
            let r: Vec<f64> = (0..draws.months)
                .map(|t| path[(t, nat)] - 0.5 * path[(t, s[0])] - 0.5 * path[(t, s[1])])
                .collect();
            let mean = super::common::mean(&r);
            resid_sd.push((r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt());
            cs_sd.push(params.sigma_cs_monthly.sqrt());
        }
        let (a, b) = (super::common::mean(&resid_sd), super::common::mean(&cs_sd));
        assert!(a <= 2.0 * b, "residual s.d. {a} vs slack s.d. {b}");
    }
}

/// Posterior s.d. of the VAR coefficients averaged over coefficients, from a
/// chain on the first `t_len` periods of `full`.
fn average_posterior_sd(full: &DMatrix<f64>, t_len: usize, seed: u64) -> f64 {
    let problem = problem_from(&full.rows(0, t_len).clone_owned());
    let layout = problem.layout().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = ChainState::initial(&problem).unwrap();
    let options = SweepOptions {
        prior: PriorConfig::default(),
        fixed_scales: false,
        fixed_slack: false,
    };
    let mut trace: Vec<Vec<f64>> = Vec::new();
    for sweep in 0..400 {
        chain.sweep(&problem, &layout, &options, &mut rng).unwrap();
        if sweep >= 100 {
            trace.push(chain.equations.iter().flat_map(|e| e.theta.clone()).collect());
        }
    }
    let k = trace[0].len();
    (0..k)
        .map(|j| common::variance(&trace.iter().map(|v| v[j]).collect::<Vec<_>>()).sqrt())
        .sum::<f64>()
        / k as f64
}

#[test]
fn doubling_the_sample_contracts_the_posterior() {
    let truth = vec![
        EquationState {
            theta: vec![0.1, 0.5, 0.2],
            sigma2: 0.5,
            scales: fixed_scales(3),
        },
        EquationState {
            theta: vec![-0.3, 0.0, 0.1, 0.6],
            sigma2: 0.5,
            scales: fixed_scales(4),
        },
    ];
    let reps = 20;
    let (mut short, mut long) = (0.0, 0.0);
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + r);
        let full = simulate_data_len(&truth, 2 * T, &mut rng);
        short += average_posterior_sd(&full, T, r);
        long += average_posterior_sd(&full, 2 * T, r);
    }
    assert!(long <= short, "average s.d. {} at 2T vs {} at T", long / reps as f64, short / reps as f64);
}

/// With parameters held fixed, the mean of repeated state draws for a single
/// quarterly-observed series matches the exact conditional mean.
#[test]
fn interpolation_matches_the_conditional_mean() {
    let t_len = 36;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let w = quarterly_monthly_weights();
    let mut z = vec![0.0; t_len];
    for t in 1..t_len {
        z[t] = 0.1 + 0.5 * z[t - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    let problem = BaseProblem {
        ids: vec!["z".into()],
        period_ends: (0..t_len).map(|t| Month::new(2000, 1).offset(t as i32)).collect(),
        data: vec![vec![None; t_len]],
        rows: vec![BoundRow {
            row: quarterly_monthly_row("zq", "z").unwrap(),
            values: (0..t_len)
                .map(|t| is_quarter_end(t).then(|| (0..5).map(|l| w[l] * z[t - l]).sum()))
                .collect(),
        }],
        exog: vec![DMatrix::zeros(t_len, 0)],
        lags: 1,
        init_variance_scale: 10.0,
    };
    let layout = problem.layout().unwrap();
    let eq = EquationState {
        theta: vec![0.1, 0.5],
        sigma2: 1.0,
        scales: fixed_scales(2),
    };
    let params = VarParameters::from_equations(1, std::slice::from_ref(&eq), &[0]).unwrap();
    let built = problem.build(&layout, &params).unwrap();
    let oracle = common::JointGaussian::new(&built.system, &built.init_mean, &built.init_cov);
    let periods = built.system.len();
    let all: Vec<usize> = (1..=periods).collect();
    let exact = oracle.condition(&built.observations, Some(periods - 1), &all);
    let dim = layout.state_dim();

    let mut chain = ChainState::initial(&problem).unwrap();
    chain.params = params;
    let n_draws = 4000;
    let mut sums = vec![0.0; t_len];
    for _ in 0..n_draws {
        chain.draw_states(&problem, &layout, &mut rng).unwrap();
        for (t, s) in sums.iter_mut().enumerate() {
            *s += chain.data[(t, 0)];
        }
    }
    for t in layout.start..t_len {
        let i = (t - layout.start) * dim;
        let (m, v) = (exact.mean[i], exact.cov[(i, i)]);
        let got = sums[t] / n_draws as f64;
        let se = (v / n_draws as f64).sqrt();
        assert!((got - m).abs() < 3.5 * se.max(1e-12), "month {t}: {got} vs {m}");
    }
}

mod nowcasting {
    use mfbvar::aggregation::quarterly_monthly_weights;
    use mfbvar::mfvar::{estimate, nowcast, McmcConfig, ModelSpec};
    use mfbvar::panel::{Frequency, MixedFrequencyPanel, Role, Scope, Series, SeriesMeta};
    use mfbvar::time::Month;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const START: (i32, u32) = (2000, 1);

    /// Monthly AR(1) `z` observed quarterly and a noisy monthly indicator `x`.
    struct Toy {
        z: Vec<f64>,
        x: Vec<f64>,
    }

    impl Toy {
        fn draw(t_len: usize, rng: &mut ChaCha8Rng) -> Self {
            let mut z = vec![0.5; t_len];
            for t in 1..t_len {
                z[t] = 0.2 + 0.6 * z[t - 1] + 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
            let x = z.iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            Self { z, x }
        }

        fn quarterly(&self, t: usize) -> f64 {
            let w = quarterly_monthly_weights();
            (0..5).map(|l| w[l] * self.z[t - l]).sum()
        }

        /// Panel with `x` through month `x_end` and `z` through quarter end `z_end`.
        fn panel(&self, x_end: usize, z_end: usize) -> MixedFrequencyPanel {
            let t_len = self.z.len();
            let start = Month::new(START.0, START.1);
            let x = Series {
                meta: SeriesMeta::new("x", Frequency::Monthly, Role::Endogenous, Scope::National),
                values: (0..t_len).map(|t| (t <= x_end).then_some(self.x[t])).collect(),
            };
            let z = Series {
                meta: SeriesMeta::new("z", Frequency::Quarterly, Role::Endogenous, Scope::National),
                values: (0..t_len)
                    .map(|t| (t % 3 == 2 && t >= 4 && t <= z_end).then(|| self.quarterly(t)))
                    .collect(),
            };
            MixedFrequencyPanel::new(start, t_len, vec![x, z], "toy").unwrap()
        }
    }

    fn spec(seed: u64) -> ModelSpec {
        let mut spec = ModelSpec::new(vec!["x".into(), "z".into()]);
        spec.lags = 1;
        spec.mcmc = McmcConfig {
            burn_in: 150,
            retained: 200,
            thin: 1,
        };
        spec.seed = seed;
        spec
    }

    fn target(t_len: usize) -> mfbvar::time::Quarter {
        Month::new(START.0, START.1).offset(t_len as i32 - 1).quarter()
    }

    #[test]
    fn observed_monthly_quarter_is_a_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let toy = Toy::draw(48, &mut rng);
        let panel = toy.panel(47, 44);
        let draws = estimate(&panel, &spec(3)).unwrap();
        let q = target(48);
        let dist = nowcast(&panel, &spec(3), &draws, &[("x".into(), q)], &mut rng).unwrap();
        let w = quarterly_monthly_weights();
        let expect: f64 = (0..5).map(|l| w[l] * toy.x[47 - l]).sum();
        let sample = dist.get("x", q).unwrap();
        assert_eq!(sample.values.len(), draws.len());
        assert!(sample.values.iter().all(|v| (v - expect).abs() < 1e-12));
        let observed = nowcast(&toy.panel(47, 47), &spec(3), &draws, &[("z".into(), q)], &mut rng);
        assert!(observed.is_err());
    }

    #[test]
    fn more_months_shrink_the_predictive_variance() {
        let t_len = 60;
        let reps = 40;
        let mut shrunk = 0;
        for r in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + r);
            let toy = Toy::draw(t_len, &mut rng);
            let q = target(t_len);
            let mut var = Vec::new();
            for x_end in [t_len - 3, t_len - 1] {
                let panel = toy.panel(x_end, t_len - 4);
                let draws = estimate(&panel, &spec(r)).unwrap();
                let dist = nowcast(&panel, &spec(r), &draws, &[("z".into(), q)], &mut rng).unwrap();
                var.push(dist.get("z", q).unwrap().variance());
            }
            if var[1] <= var[0] {
                shrunk += 1;
            }
        }
        assert!(shrunk as f64 >= 0.95 * reps as f64, "{shrunk} of {reps}");
    }

    #[test]
    fn predictive_intervals_are_calibrated() {
        let t_len = 60;
        let reps = 200;
        let mut covered = 0;
        for r in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + r);
            let toy = Toy::draw(t_len, &mut rng);
            let q = target(t_len);
            let panel = toy.panel(t_len - 2, t_len - 4);
            let draws = estimate(&panel, &spec(r)).unwrap();
            let dist = nowcast(&panel, &spec(r), &draws, &[("z".into(), q)], &mut rng).unwrap();
            let s = dist.get("z", q).unwrap();
            let truth = toy.quarterly(t_len - 1);
            if s.quantile(0.05) <= truth && truth <= s.quantile(0.95) {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((rate - 0.9).abs() <= 0.05, "coverage {rate}");
    }
}
