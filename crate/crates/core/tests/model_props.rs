use proptest::prelude::*;
use scrpp::model::{compensator, intensity_at, intensity_binned, BinGrid};
use scrpp::{ModelParams, TrialCovariates};

fn trial() -> impl Strategy<Value = TrialCovariates> {
    (
        proptest::option::weighted(0.95, 0.0..60.0f64),
        any::<bool>(),
        -2.5..2.5f64,
        any::<bool>(),
    )
        .prop_map(|(rho, negative, x_rt, error)| TrialCovariates {
            response_time_s: rho,
            raw_rt_s: rho.map(|_| 0.5),
            negative,
            x_rt: if rho.is_some() { x_rt } else { 0.0 },
            error: error || rho.is_none(),
        })
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        1e-3..1.0f64,
        1e-3..2.0f64,
        -2.0..2.0f64,
        -2.0..2.0f64,
        -2.0..2.0f64,
        0.3..20.0f64,
    )
        .prop_map(|(mu, a0, wn, wr, we, tau)| ModelParams::full(mu, a0, wn, wr, we, tau))
}

fn sorted(mut trials: Vec<TrialCovariates>) -> Vec<TrialCovariates> {
    trials.sort_by(|a, b| {
        let key = |t: &TrialCovariates| t.response_time_s.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    trials
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn binned_intensity_matches_pointwise(
        p in params(),
        trials in prop::collection::vec(trial(), 0..40),
        dt in prop::sample::select(vec![0.1, 0.25, 1.0, 2.0, 3.7]),
        duration in 5.0..70.0f64,
    ) {
        let trials = sorted(trials);
        let grid = BinGrid::new(dt, duration).unwrap();
        let binned = intensity_binned(&p, &trials, &grid);
        prop_assert_eq!(binned.len(), (duration / dt).ceil() as usize);
        for (k, lam) in binned.iter().enumerate() {
            let direct = intensity_at(&p, &trials, grid.center(k));
            prop_assert!((lam - direct).abs() <= 1e-9 * direct.max(1.0), "bin {}: {} vs {}", k, lam, direct);
        }
    }

    #[test]
    fn intensity_never_below_baseline(
        p in params(),
        trials in prop::collection::vec(trial(), 0..40),
        t in 0.0..80.0f64,
    ) {
        prop_assert!(intensity_at(&p, &trials, t) >= p.mu);
    }

    #[test]
    fn compensator_matches_trapezoid(
        p in params().prop_filter("smooth enough for a 1 ms grid", |p| p.tau >= 0.7),
        trials in prop::collection::vec(trial(), 0..8),
    ) {
        // Kernel kinks sit exactly on grid points, so the trapezoid rule only
        // carries its smooth-curvature error between nodes.
        let trials: Vec<TrialCovariates> = trials
            .into_iter()
            .map(|mut t| {
                t.response_time_s = t.response_time_s.map(|r| (r * 1000.0).round() / 1000.0);
                t
            })
            .collect();
        let t_end = 20.0;
        let n = 20_000;
        let h = t_end / n as f64;
        let mut trap = 0.0;
        for k in 0..n {
            let left = intensity_at(&p, &trials, k as f64 * h);
            // Left limit at the next node, in case a kernel switches on there.
            let right = intensity_at(&p, &trials, (k + 1) as f64 * h - 1e-12);
            trap += 0.5 * h * (left + right);
        }
        let exact = compensator(&p, &trials, t_end);
        prop_assert!((trap - exact).abs() <= 1e-6 * exact.max(1.0), "trapezoid {} vs closed form {}", trap, exact);
    }

    #[test]
    fn trial_order_is_irrelevant(
        p in params(),
        trials in prop::collection::vec(trial(), 1..30),
        seed in any::<u64>(),
        t in 0.0..70.0f64,
    ) {
        use rand::seq::SliceRandom;
        let mut shuffled = trials.clone();
        shuffled.shuffle(&mut scrpp::seed::rng(seed));
        let a = intensity_at(&p, &trials, t);
        let b = intensity_at(&p, &shuffled, t);
        prop_assert!((a - b).abs() <= 1e-12 * a);
        let ca = compensator(&p, &trials, t);
        let cb = compensator(&p, &shuffled, t);
        prop_assert!((ca - cb).abs() <= 1e-12 * ca.max(1.0));
        let grid = BinGrid::new(0.5, 70.0).unwrap();
        let ba = intensity_binned(&p, &sorted(trials.clone()), &grid);
        let bb = intensity_binned(&p, &shuffled, &grid);
        for (x, y) in ba.iter().zip(&bb) {
            prop_assert!((x - y).abs() <= 1e-9 * x);
        }
    }
}
