//! Goodness of fit: AIC, the Kolmogorov-Smirnov distance between the
//! empirical onset CDF and the model's normalized compensator, and the
//! three-model comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compensator, EventTrain, ModelParams, SubjectRecord, TrialCovariates, Variant};
use crate::optim::{FitReport, FitSet};

/// Coefficient of the 5% large-sample KS critical value.
pub const KS_COEFF: f64 = 1.36;

/// `2P − 2 log L`, with `nll = −log L`.
pub fn aic(n_params: usize, nll: f64) -> f64 {
    2.0 * n_params as f64 + 2.0 * nll
}

/// `coeff / √n`.
///
/// # Panics
/// If `n_events` is zero.
pub fn ks_threshold(n_events: usize, coeff: f64) -> f64 {
    assert!(n_events >= 1, "KS threshold needs at least one event");
    coeff / (n_events as f64).sqrt()
}

/// Sup distance between the empirical CDF of the onsets and
/// `F(t) = Λ(t)/Λ(T)`.
///
/// The model CDF is continuous and the empirical one jumps at each onset, so
/// the supremum is attained just before or at an onset:
/// `D = max_i max(i/n − F(t_i), F(t_i) − (i−1)/n)`.
pub fn ks_statistic(events: &EventTrain, params: &ModelParams, trials: &[TrialCovariates]) -> Result<f64> {
    if events.is_empty() {
        return Err(Error::Undefined("KS statistic of an empty event train".into()));
    }
    let total = compensator(params, trials, events.duration());
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical(format!("model compensator over the window is {total}")));
    }
    let n = events.len() as f64;
    let d = events
        .onsets()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = compensator(params, trials, t) / total;
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(d.clamp(0.0, 1.0))
}

/// Compensator increments between successive events, starting from 0.
/// Under a correct model they are i.i.d. unit exponential.
pub fn time_rescale(events: &EventTrain, params: &ModelParams, trials: &[TrialCovariates]) -> Result<Vec<f64>> {
    if events.is_empty() {
        return Err(Error::Undefined("time rescaling of an empty event train".into()));
    }
    let mut prev = 0.0;
    Ok(events
        .onsets()
        .iter()
        .map(|&t| {
            let l = compensator(params, trials, t);
            let z = (l - prev).max(0.0);
            prev = l;
            z
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub variant: Variant,
    pub n_params: usize,
    pub nll: f64,
    pub aic: f64,
    pub ks_d: f64,
    pub ks_threshold: f64,
    pub n_events: usize,
    pub passes_ks: bool,
}

pub fn gof_report(fit: &FitReport, subject: &SubjectRecord) -> Result<GofReport> {
    let variant = fit.params.variant;
    let ks_d = ks_statistic(&subject.events, &fit.params, &subject.trials)?;
    let th = ks_threshold(subject.events.len(), KS_COEFF);
    Ok(GofReport {
        variant,
        n_params: variant.n_params(),
        nll: fit.nll,
        aic: aic(variant.n_params(), fit.nll),
        ks_d,
        ks_threshold: th,
        n_events: subject.events.len(),
        passes_ks: ks_d < th,
    })
}

/// One subject's reports, in [`Variant::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub subject_id: String,
    pub reports: Vec<GofReport>,
}

pub fn compare_models(subject: &SubjectRecord, fits: &FitSet) -> Result<ModelComparison> {
    let reports = Variant::ALL
        .iter()
        .map(|&v| gof_report(fits.get(v), subject))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelComparison {
        subject_id: subject.subject_id.clone(),
        reports,
    })
}

/// Cohort summary for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub n_params: usize,
    pub n_subjects: usize,
    pub nll_mean: f64,
    pub nll_sd: f64,
    pub aic_mean: f64,
    pub aic_sd: f64,
    pub ks_mean: f64,
    pub ks_median: f64,
    pub ks_pass_rate: f64,
}

pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if v.iter().all(|x| *x == v[0]) {
        return (v[0], 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Mean ± sample sd of NLL and AIC, mean and median KS per variant.
pub fn comparison_table(rows: &[ModelComparison]) -> Vec<ComparisonRow> {
    Variant::ALL
        .iter()
        .map(|&v| {
            let reps: Vec<&GofReport> = rows
                .iter()
                .flat_map(|r| r.reports.iter().filter(move |g| g.variant == v))
                .collect();
            let nll: Vec<f64> = reps.iter().map(|g| g.nll).collect();
            let aics: Vec<f64> = reps.iter().map(|g| g.aic).collect();
            let ks: Vec<f64> = reps.iter().map(|g| g.ks_d).collect();
            let (nll_mean, nll_sd) = mean_sd(&nll);
            let (aic_mean, aic_sd) = mean_sd(&aics);
            let pass = reps.iter().filter(|g| g.passes_ks).count() as f64;
            ComparisonRow {
                variant: v,
                n_params: v.n_params(),
                n_subjects: reps.len(),
                nll_mean,
                nll_sd,
                aic_mean,
                aic_sd,
                ks_mean: mean_sd(&ks).0,
                ks_median: median(&ks),
                ks_pass_rate: if reps.is_empty() { f64::NAN } else { pass / reps.len() as f64 },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn aic_anchors() {
        assert_relative_eq!(aic(1, 160.7), 323.4, epsilon = 1e-9);
        assert_relative_eq!(aic(3, 259.2), 524.4, epsilon = 1e-9);
        assert_relative_eq!(aic(6, 156.2), 324.4, epsilon = 1e-9);
    }

    #[test]
    fn threshold_scaling() {
        assert_eq!((ks_threshold(64, KS_COEFF) * 100.0).round() / 100.0, 0.17);
        assert_eq!(ks_threshold(1, KS_COEFF), 1.36);
        assert_relative_eq!(ks_threshold(40, KS_COEFF), 2.0 * ks_threshold(160, KS_COEFF));
    }

    #[test]
    fn quartile_events_under_uniform_model() {
        let t = 100.0;
        let e = EventTrain::new(vec![25.0, 50.0, 75.0], t).unwrap();
        let d = ks_statistic(&e, &ModelParams::homogeneous(0.1), &[]).unwrap();
        assert_relative_eq!(d, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn single_event_at_median() {
        let e = EventTrain::new(vec![50.0], 100.0).unwrap();
        let d = ks_statistic(&e, &ModelParams::homogeneous(0.3), &[]).unwrap();
        assert_relative_eq!(d, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_train_is_undefined() {
        let e = EventTrain::new(vec![], 10.0).unwrap();
        assert!(matches!(
            ks_statistic(&e, &ModelParams::homogeneous(0.1), &[]),
            Err(Error::Undefined(_))
        ));
        assert!(time_rescale(&e, &ModelParams::homogeneous(0.1), &[]).is_err());
    }

    #[test]
    fn rescaled_equal_spacing() {
        let e = EventTrain::new(vec![2.0, 4.0, 6.0, 8.0], 10.0).unwrap();
        let z = time_rescale(&e, &ModelParams::homogeneous(0.25), &[]).unwrap();
        for v in z {
            assert_relative_eq!(v, 0.5, epsilon = 1e-12);
        }
    }
}
