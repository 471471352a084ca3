use mfbvar::analysis::{
    correlate_with_national, date_cycles, date_cycles_with, generalized_fevd_reduced, pearson, ConnectednessTable,
    DatingRules, TurnKind,
};
use nalgebra::{dmatrix, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Impulse responses obtained by running the VAR recursion forward from a
/// unit shock until the response has died out below `tail`.
fn simulated_responses(lags: &[DMatrix<f64>], n: usize, tail: f64) -> Vec<DMatrix<f64>> {
    let p = lags.len();
    let mut out: Vec<DMatrix<f64>> = Vec::new();
    let mut history: Vec<Vec<DVector<f64>>> = vec![Vec::new(); n];
    loop {
        let step = out.len();
        let mut psi = DMatrix::zeros(n, n);
        for j in 0..n {
            let y = if step == 0 {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                e
            } else {
                let mut y = DVector::zeros(n);
                for l in 1..=p.min(step) {
                    y += &lags[l - 1] * &history[j][step - l];
                }
                y
            };
            psi.set_column(j, &y);
            history[j].push(y);
        }
        let size = psi.amax();
        out.push(psi);
        if size < tail && out.len() > p {
            break;
        }
        assert!(out.len() < 100_000, "responses do not die out");
    }
    out
}

/// Row-normalized generalized decomposition from the first `h` responses.
fn brute_force_shares(psi: &[DMatrix<f64>], cov: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let n = cov.nrows();
    let mut d = DMatrix::zeros(n, n);
    for r in 0..n {
        let mut total = 0.0;
        for p in psi.iter().take(h) {
            total += (p * cov * p.transpose())[(r, r)];
        }
        for j in 0..n {
            let mut num = 0.0;
            for p in psi.iter().take(h) {
                num += (p * cov)[(r, j)].powi(2);
            }
            d[(r, j)] = num / cov[(j, j)] / total;
        }
        let s: f64 = d.row(r).sum();
        for j in 0..n {
            d[(r, j)] /= s;
        }
    }
    d
}

#[test]
fn bivariate_decomposition_matches_simulated_responses() {
    let lags = vec![
        dmatrix![0.5, 0.2; -0.1, 0.4],
        dmatrix![0.1, 0.0; 0.15, -0.2],
    ];
    let cov = dmatrix![1.0, 0.3; 0.3, 0.5];
    let psi = simulated_responses(&lags, 2, 1e-12);
    for h in [1usize, 2, 5, 12, 24] {
        let table = generalized_fevd_reduced(&ids(2), &lags, &cov, h).unwrap();
        let oracle = brute_force_shares(&psi, &cov, h);
        assert!((&table.shares - &oracle).amax() < 1e-10, "h = {h}");
    }
    let long = generalized_fevd_reduced(&ids(2), &lags, &cov, psi.len()).unwrap();
    let oracle = brute_force_shares(&psi, &cov, psi.len());
    assert!((&long.shares - &oracle).amax() < 1e-10);
}

#[test]
fn reordering_variables_permutes_the_table() {
    let lags = vec![dmatrix![0.4, 0.1, 0.0; 0.2, 0.3, -0.1; 0.0, 0.25, 0.5]];
    let cov = dmatrix![1.0, 0.2, 0.1; 0.2, 0.8, -0.3; 0.1, -0.3, 1.5];
    let perm = [2usize, 0, 1];
    let p = DMatrix::from_fn(3, 3, |r, c| if perm[r] == c { 1.0 } else { 0.0 });
    let plags = vec![&p * &lags[0] * p.transpose()];
    let pcov = &p * &cov * p.transpose();
    let base = generalized_fevd_reduced(&ids(3), &lags, &cov, 10).unwrap();
    let moved = generalized_fevd_reduced(&ids(3), &plags, &pcov, 10).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            assert!((moved.shares[(r, c)] - base.shares[(perm[r], perm[c])]).abs() < 1e-12);
        }
    }
}

#[test]
fn unstable_system_is_rejected() {
    let lags = vec![dmatrix![1.05, 0.0; 0.0, 0.2]];
    let cov = DMatrix::identity(2, 2);
    assert!(generalized_fevd_reduced(&ids(2), &lags, &cov, 4).is_err());
}

/// Stable VAR(2) with a random positive definite covariance.
fn random_var(n: usize, rng: &mut ChaCha8Rng) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    loop {
        let lags: Vec<DMatrix<f64>> = (0..2)
            .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.4..0.4)))
            .collect();
        let mut comp = DMatrix::zeros(2 * n, 2 * n);
        comp.view_mut((0, 0), (n, n)).copy_from(&lags[0]);
        comp.view_mut((0, n), (n, n)).copy_from(&lags[1]);
        comp.view_mut((n, 0), (n, n)).fill_with_identity();
        let radius = comp.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        if radius < 0.9 {
            let f = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cov = &f * f.transpose() + DMatrix::identity(n, n) * 0.1;
            return (lags, cov);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shares_are_normalized_proportions(seed in any::<u64>(), h in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lags, cov) = random_var(4, &mut rng);
        let t = generalized_fevd_reduced(&ids(4), &lags, &cov, h).unwrap();
        for r in 0..4 {
            prop_assert!((t.shares.row(r).sum() - 1.0).abs() < 1e-10);
            for c in 0..4 {
                prop_assert!((0.0..=1.0).contains(&t.shares[(r, c)]));
            }
        }
    }

    #[test]
    fn shares_settle_as_the_horizon_grows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lags, cov) = random_var(3, &mut rng);
        let h = simulated_responses(&lags, 3, 1e-12).len();
        let a = generalized_fevd_reduced(&ids(3), &lags, &cov, h).unwrap();
        let b = generalized_fevd_reduced(&ids(3), &lags, &cov, h + 1).unwrap();
        prop_assert!((&a.shares - &b.shares).amax() < 1e-8);
    }

    #[test]
    fn total_inbound_equals_total_outbound(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shares = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
        for r in 0..n {
            let s = shares.row(r).sum();
            shares.row_mut(r).scale_mut(1.0 / s);
        }
        let t = ConnectednessTable { horizon: 1, ids: ids(n), shares };
        let from: f64 = (0..n).map(|i| t.from(i).unwrap()).sum();
        let to: f64 = (0..n).map(|i| t.to(i).unwrap()).sum();
        prop_assert!((from - to).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_bounded_and_symmetric(seed in any::<u64>(), len in 3usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = a.iter().map(|x| 0.5 * x + rng.sample::<f64, _>(StandardNormal)).collect();
        let r = pearson(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - pearson(&b, &a).unwrap()).abs() < 1e-14);
    }
}

#[test]
fn sine_wave_turns_at_its_analytic_extrema() {
    let levels: Vec<f64> = (0..240)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 48.0).sin())
        .collect();
    let set = date_cycles(&levels).unwrap();
    let peaks = set.peaks();
    let troughs = set.troughs();
    assert_eq!(peaks.len(), 5, "{peaks:?}");
    assert_eq!(troughs.len(), 5, "{troughs:?}");
    for (k, p) in peaks.iter().enumerate() {
        assert!((*p as i64 - (12 + 48 * k) as i64).abs() <= 1, "peak {p}");
    }
    for (k, t) in troughs.iter().enumerate() {
        assert!((*t as i64 - (36 + 48 * k) as i64).abs() <= 1, "trough {t}");
    }
    assert_eq!(set.recessions(), 5);
}

#[test]
fn random_walk_dating_alternates_and_respects_durations() {
    let rules = DatingRules::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let mut level = 0.0;
        let path: Vec<f64> = (0..240)
            .map(|_| {
                level += rng.sample::<f64, _>(StandardNormal);
                level
            })
            .collect();
        let set = date_cycles_with(&path, rules).unwrap();
        for w in set.points.windows(2) {
            assert_ne!(w[0].kind, w[1].kind);
            assert!(w[1].index - w[0].index >= rules.min_phase);
            let (a, b) = (path[w[0].index], path[w[1].index]);
            match w[0].kind {
                TurnKind::Peak => assert!(a > b),
                TurnKind::Trough => assert!(a < b, "{:?} {:?}", set.points, set.points.iter().map(|p| path[p.index]).collect::<Vec<_>>()),
            }
        }
        for w in set.points.windows(3) {
            assert!(w[2].index - w[0].index >= rules.min_cycle);
        }
    }
}

#[test]
fn independent_noise_is_nearly_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let national: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let states: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..10_000).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for r in correlate_with_national(&states, &national).unwrap() {
        assert!(r.abs() < 0.05, "{r}");
    }
}
