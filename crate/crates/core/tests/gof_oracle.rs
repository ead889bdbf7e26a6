//! KS statistic against a brute-force grid evaluation of the two CDFs.

use scrpp::gof::{ks_statistic, time_rescale};
use scrpp::model::compensator;
use scrpp::simulate::{gen_trial_schedule, reference_params, simulate_exact};
use scrpp::{EventTrain, ModelParams, TrialScheduleConfig};

/// Supremum over a fine grid plus one-sided limits at each onset.
fn grid_ks(events: &EventTrain, params: &ModelParams, trials: &[scrpp::TrialCovariates]) -> f64 {
    let t_end = events.duration();
    let total = compensator(params, trials, t_end);
    let n = events.len() as f64;
    let on = events.onsets();
    let ecdf = |t: f64, inclusive: bool| {
        on.iter().filter(|&&x| if inclusive { x <= t } else { x < t }).count() as f64 / n
    };
    let mut d: f64 = 0.0;
    let steps = 20_000;
    for k in 0..=steps {
        let t = t_end * k as f64 / steps as f64;
        d = d.max((ecdf(t, true) - compensator(params, trials, t) / total).abs());
    }
    for &t in on {
        let f = compensator(params, trials, t) / total;
        d = d.max((ecdf(t, true) - f).abs()).max((ecdf(t, false) - f).abs());
    }
    d
}

#[test]
fn onset_formula_matches_grid_supremum() {
    let sched = gen_trial_schedule(&TrialScheduleConfig::default(), 21).unwrap();
    let truth = reference_params();
    let misfit = ModelParams::full(0.2, 0.1, 0.0, 0.0, 0.0, 9.0);
    for (seed, params) in [(1, truth), (2, misfit), (3, ModelParams::homogeneous(0.3))] {
        let ev = simulate_exact(&truth, &sched.trials, sched.duration, seed).unwrap();
        let d = ks_statistic(&ev, &params, &sched.trials).unwrap();
        let oracle = grid_ks(&ev, &params, &sched.trials);
        assert!((d - oracle).abs() < 1e-12, "{d} vs {oracle}");
    }
}

#[test]
fn rescaled_intervals_are_unit_exponential_under_truth() {
    let sched = gen_trial_schedule(&TrialScheduleConfig::default(), 22).unwrap();
    let p = reference_params();
    let mut all = Vec::new();
    for seed in 0..20 {
        let ev = simulate_exact(&p, &sched.trials, sched.duration, seed).unwrap();
        all.extend(time_rescale(&ev, &p, &sched.trials).unwrap());
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    assert!((mean - 1.0).abs() < 4.0 / n.sqrt(), "mean interval {mean}");
}

#[test]
fn small_hand_example() {
    // Homogeneous rate on [0, 4] with onsets 1 and 3: F = t/4, so
    // D = max(1/2 - 1/4, 1/4 - 0, 1 - 3/4, 3/4 - 1/2) = 1/4.
    let ev = EventTrain::new(vec![1.0, 3.0], 4.0).unwrap();
    let d = ks_statistic(&ev, &ModelParams::homogeneous(0.5), &[]).unwrap();
    assert!((d - 0.25).abs() < 1e-15);
}
