use scrpp::ml::auroc;
use scrpp::stats::{bh_fdr, cohens_d, mann_whitney_u, mann_whitney_u_with, MannWhitneyConfig};
use statrs::distribution::{ContinuousCDF, Normal};

fn sample(seed: u64, n: usize, shift: f64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = scrpp::seed::rng(seed);
    (0..n).map(|_| rng.random::<f64>() + shift).collect()
}

#[test]
fn exact_and_normal_approximation_agree_for_moderate_samples() {
    let force_normal = MannWhitneyConfig { exact_max_n: 0 };
    for (seed, shift) in [(1, 0.0), (2, 0.2), (3, 0.4)] {
        let x = sample(seed, 10, shift);
        let y = sample(seed + 100, 10, 0.0);
        let exact = mann_whitney_u(&x, &y).unwrap();
        let approx = mann_whitney_u_with(&x, &y, &force_normal).unwrap();
        assert!(exact.exact && !approx.exact);
        assert_eq!(exact.u, approx.u);
        assert!((exact.p - approx.p).abs() < 0.03, "exact {} vs normal {}", exact.p, approx.p);
    }
}

#[test]
fn normal_approximation_oracle() {
    let x = sample(7, 25, 0.3);
    let y = sample(8, 30, 0.0);
    let r = mann_whitney_u(&x, &y).unwrap();
    let ux = x.iter().map(|a| y.iter().filter(|&&b| a > &b).count() as f64).sum::<f64>();
    let (n1, n2) = (25.0f64, 30.0f64);
    let mean = n1 * n2 / 2.0;
    let sd = (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
    let z = ((ux - mean).abs() - 0.5) / sd;
    let p = 2.0 * (1.0 - Normal::standard().cdf(z));
    assert!(!r.exact);
    assert_eq!(r.u, ux.min(n1 * n2 - ux));
    assert!((r.p - p).abs() < 1e-9, "{} vs {p}", r.p);
}

#[test]
fn bh_step_up() {
    let r = bh_fdr(&[0.01, 0.04, 0.03, 0.2], 0.05).unwrap();
    assert_eq!(r.rejected, vec![true, false, false, false]);
    // Step-up: the largest p clears its threshold, so every smaller one is
    // rejected even where it misses its own.
    let r = bh_fdr(&[0.01, 0.02, 0.035, 0.04], 0.05).unwrap();
    assert_eq!(r.rejected, vec![true; 4]);
}

#[test]
fn cohens_d_pooled() {
    let d = cohens_d(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
    // pooled var = (2*4 + 2*1) / 4 = 2.5
    assert!((d - 2.0 / 2.5f64.sqrt()).abs() < 1e-12);
}

/// Trapezoid area under the ROC curve traced over all distinct thresholds.
fn trapezoid_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let pos = labels.iter().filter(|&&l| l > 0.0).count() as f64;
    let neg = labels.len() as f64 - pos;
    let (mut tp, mut fp, mut area, mut prev_tpr, mut prev_fpr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] > 0.0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / pos, fp / neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    area
}

#[test]
fn auroc_matches_trapezoid_with_ties() {
    use rand::Rng;
    let mut rng = scrpp::seed::rng(99);
    for _ in 0..50 {
        let n = rng.random_range(4..60);
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 2.0).collect();
        let mut labels: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        labels[0] = 1.0;
        labels[1] = -1.0;
        let a = auroc(&scores, &labels).unwrap();
        assert!((a - trapezoid_auc(&scores, &labels)).abs() < 1e-12);
    }
}
