//! Monte Carlo checks of the two simulators against the model moments.

use scrpp::likelihood::bin_events;
use scrpp::model::{build_covariates, compensator, intensity_binned, BinGrid, RawTrial};
use scrpp::simulate::{gen_trial_schedule, reference_params, simulate_binned, simulate_exact};
use scrpp::{seed, ModelParams, TrialScheduleConfig};

fn few_trials() -> Vec<scrpp::TrialCovariates> {
    let raw: Vec<RawTrial> = (0..6)
        .map(|i| RawTrial {
            trial_idx: i,
            stim_onset_s: 3.0 * i as f64,
            response_time_s: Some(3.0 * i as f64 + 0.6),
            rt_s: Some(0.6 + 0.05 * i as f64),
            negative: i % 2 == 0,
            correct: i != 4,
        })
        .collect();
    build_covariates(&raw).unwrap()
}

#[test]
fn binned_homogeneous_mean() {
    let grid = BinGrid::new(1.0, 10_000.0).unwrap();
    let c = simulate_binned(&ModelParams::homogeneous(0.1), &[], &grid, 11).unwrap();
    let mean = c.total() as f64 / c.counts.len() as f64;
    let sd = (0.1f64 / c.counts.len() as f64).sqrt();
    assert!((mean - 0.1).abs() < 3.0 * sd, "mean {mean}");
}

#[test]
fn exact_count_matches_compensator() {
    let p = reference_params();
    let sched = gen_trial_schedule(&TrialScheduleConfig::default(), 5).unwrap();
    let expect = compensator(&p, &sched.trials, sched.duration);
    let reps = 200;
    let total: usize = (0..reps)
        .map(|r| simulate_exact(&p, &sched.trials, sched.duration, seed::derive(5, r)).unwrap().len())
        .sum();
    let mean = total as f64 / reps as f64;
    let sd = (expect / reps as f64).sqrt();
    assert!((mean - expect).abs() < 3.0 * sd, "mean count {mean}, expected {expect}");
}

#[test]
fn exact_and_binned_first_moments_agree_per_bin() {
    let p = ModelParams::full(0.2, 0.8, 0.5, 0.3, -0.4, 2.0);
    let trials = few_trials();
    let (dt, duration) = (1.0, 20.0);
    let grid = BinGrid::new(dt, duration).unwrap();
    let reps = 4000u64;
    let k = grid.n_bins;
    let mut exact = vec![0.0; k];
    let mut binned = vec![0.0; k];
    for r in 0..reps {
        let e = simulate_exact(&p, &trials, duration, seed::derive(1, r)).unwrap();
        for (acc, y) in exact.iter_mut().zip(&bin_events(&e, dt).unwrap().counts) {
            *acc += f64::from(*y);
        }
        for (acc, y) in binned.iter_mut().zip(&simulate_binned(&p, &trials, &grid, seed::derive(2, r)).unwrap().counts) {
            *acc += f64::from(*y);
        }
    }
    let lam = intensity_binned(&p, &trials, &grid);
    for i in 0..k {
        // Exact bin mean is the compensator increment; the binned draw uses
        // the midpoint rule, so compare each against its own target.
        let lo = grid.start(i);
        let target_exact = compensator(&p, &trials, lo + grid.width(i)) - compensator(&p, &trials, lo);
        let target_binned = lam[i] * grid.width(i);
        for (sum, target) in [(exact[i], target_exact), (binned[i], target_binned)] {
            let mean = sum / reps as f64;
            let sd = (target / reps as f64).sqrt();
            assert!((mean - target).abs() < 4.0 * sd, "bin {i}: mean {mean}, target {target}");
        }
    }
}

#[test]
fn schedule_shape() {
    let s = gen_trial_schedule(&TrialScheduleConfig::default(), 9).unwrap();
    assert_eq!(s.raw_trials.len(), 480);
    assert!((s.duration - 1080.0).abs() < 1e-9);
    let answered: Vec<f64> = s.raw_trials.iter().filter_map(|t| t.rt_s).collect();
    let mean_log = answered.iter().map(|r| r.ln()).sum::<f64>() / answered.len() as f64;
    assert!((mean_log + 0.6).abs() < 0.05, "mean log rt {mean_log}");
    assert!(s.raw_trials.windows(2).all(|w| w[0].stim_onset_s < w[1].stim_onset_s));
}
