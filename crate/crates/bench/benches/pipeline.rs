use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use scrpp::likelihood::{bin_events, Objective};
use scrpp::ml::{loso_evaluate, svm_train, FeatureTable, LosoConfig, SvmConfig};
use scrpp::optim::{fit, fit_all};
use scrpp::simulate::{gen_trial_schedule, reference_params, simulate_exact};
use scrpp::{seed, FitOptions, RidgeConfig, SubjectRecord, TrialScheduleConfig, Variant};

fn subject() -> SubjectRecord {
    let sched = gen_trial_schedule(&TrialScheduleConfig::default(), 1).unwrap();
    let events = simulate_exact(&reference_params(), &sched.trials, sched.duration, 2).unwrap();
    SubjectRecord::new("s", events, sched.raw_trials, None).unwrap()
}

fn table(n: usize, d: usize) -> FeatureTable {
    let mut rng = seed::rng(3);
    use rand::Rng;
    FeatureTable {
        schema: (0..d).map(|j| format!("f{j}")).collect(),
        subject_ids: (0..n).map(|i| format!("s{i}")).collect(),
        groups: (0..n).map(|i| if i % 2 == 0 { "C" } else { "D" }.into()).collect(),
        rows: (0..n)
            .map(|i| (0..d).map(|j| rng.random::<f64>() + if j == 0 && i % 2 == 1 { 0.5 } else { 0.0 }).collect())
            .collect(),
    }
}

fn likelihood(c: &mut Criterion) {
    let s = subject();
    let counts = bin_events(&s.events, 1.0).unwrap();
    let obj = Objective::new(&s.trials, &counts, RidgeConfig::default());
    let p = reference_params();
    c.bench_function("objective_and_gradient", |b| b.iter(|| obj.evaluate(black_box(&p)).unwrap()));
}

fn fitting(c: &mut Criterion) {
    let s = subject();
    let opts = FitOptions::default();
    let mut g = c.benchmark_group("fit");
    g.sample_size(20);
    g.bench_function("full", |b| b.iter(|| fit(Variant::Full, black_box(&s), &opts).unwrap()));
    g.bench_function("all_variants", |b| b.iter(|| fit_all(black_box(&s), &opts).unwrap()));
    g.finish();
}

fn classification(c: &mut Criterion) {
    let t = table(60, 7);
    let y = t.labels("C");
    c.bench_function("svm_train_60x7", |b| b.iter(|| svm_train(black_box(&t.rows), &y, &SvmConfig::default()).unwrap()));
    let mut g = c.benchmark_group("loso");
    g.sample_size(10);
    g.bench_function("60_subjects_10_seeds", |b| {
        b.iter(|| loso_evaluate(black_box(&t), &LosoConfig::default(), &(0..10).collect::<Vec<_>>()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, likelihood, fitting, classification);
criterion_main!(benches);
