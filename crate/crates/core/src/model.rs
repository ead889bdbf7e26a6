//! Domain types and the conditional intensity of the trial-locked model.
//!
//! The intensity is a baseline rate plus one exponentially decaying kernel per
//! answered trial, anchored at the response time:
//!
//! ```text
//! λ(t) = μ + Σ_j A_j · exp(-(t - ρ_j)/τ) · 1{t ≥ ρ_j}
//! A_j  = A₀ · exp(w_neg·x_neg + w_rt·x_rt + w_err·x_err)
//! ```
//!
//! Intensities are in events/second throughout. Missed trials have no
//! response time and contribute no kernel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model family, ordered by nesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Constant rate `μ`.
    Homogeneous,
    /// Baseline plus kernels with a common amplitude `A₀`.
    TrialModulated,
    /// Baseline plus kernels with covariate-modulated amplitudes.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Homogeneous, Variant::TrialModulated, Variant::Full];

    /// Number of free parameters, as used by AIC.
    pub fn n_params(self) -> usize {
        match self {
            Variant::Homogeneous => 1,
            Variant::TrialModulated => 3,
            Variant::Full => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Homogeneous => "HOMOGENEOUS",
            Variant::TrialModulated => "TRIAL_MODULATED",
            Variant::Full => "FULL",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HOMOGENEOUS" => Ok(Variant::Homogeneous),
            "TRIAL_MODULATED" => Ok(Variant::TrialModulated),
            "FULL" => Ok(Variant::Full),
            _ => Err(Error::InvalidInput(format!("unknown model variant '{s}'"))),
        }
    }
}

/// Names of the six parameters in canonical order.
pub const PARAM_NAMES: [&str; 6] = ["mu", "a0", "w_neg", "w_rt", "w_err", "tau"];

/// Parameter vector `{μ, A₀, w_neg, w_rt, w_err, τ}` tagged with its variant.
///
/// Unused entries are zero: `a0`, the weights and `tau` for
/// [`Variant::Homogeneous`], the weights for [`Variant::TrialModulated`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub a0: f64,
    pub w_neg: f64,
    pub w_rt: f64,
    pub w_err: f64,
    pub tau: f64,
    pub variant: Variant,
}

impl ModelParams {
    pub fn homogeneous(mu: f64) -> Self {
        Self {
            mu,
            a0: 0.0,
            w_neg: 0.0,
            w_rt: 0.0,
            w_err: 0.0,
            tau: 0.0,
            variant: Variant::Homogeneous,
        }
    }

    pub fn trial_modulated(mu: f64, a0: f64, tau: f64) -> Self {
        Self {
            mu,
            a0,
            w_neg: 0.0,
            w_rt: 0.0,
            w_err: 0.0,
            tau,
            variant: Variant::TrialModulated,
        }
    }

    pub fn full(mu: f64, a0: f64, w_neg: f64, w_rt: f64, w_err: f64, tau: f64) -> Self {
        Self {
            mu,
            a0,
            w_neg,
            w_rt,
            w_err,
            tau,
            variant: Variant::Full,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.mu, self.a0, self.w_neg, self.w_rt, self.w_err, self.tau]
    }

    /// Builds parameters from a canonical-order array, zeroing the entries
    /// the variant does not use.
    pub fn from_array(v: [f64; 6], variant: Variant) -> Self {
        match variant {
            Variant::Homogeneous => Self::homogeneous(v[0]),
            Variant::TrialModulated => Self::trial_modulated(v[0], v[1], v[5]),
            Variant::Full => Self::full(v[0], v[1], v[2], v[3], v[4], v[5]),
        }
    }

    /// Re-tags the parameters as `variant`, dropping what it does not use.
    pub fn restrict(&self, variant: Variant) -> Self {
        Self::from_array(self.to_array(), variant)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(format!("non-finite parameters {self:?}")));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidInput(format!("mu must be > 0, got {}", self.mu)));
        }
        if self.variant != Variant::Homogeneous {
            if self.a0 <= 0.0 {
                return Err(Error::InvalidInput(format!("a0 must be > 0, got {}", self.a0)));
            }
            if self.tau <= 0.0 {
                return Err(Error::InvalidInput(format!("tau must be > 0, got {}", self.tau)));
            }
        }
        Ok(())
    }

    /// Log-linear predictor `w·x` of one trial (zero unless FULL).
    #[inline]
    pub fn log_gain(&self, x: &[f64; 3]) -> f64 {
        match self.variant {
            Variant::Full => self.w_neg * x[0] + self.w_rt * x[1] + self.w_err * x[2],
            _ => 0.0,
        }
    }
}

/// Observed event onsets on `[0, duration]`, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrain {
    onsets: Vec<f64>,
    duration: f64,
}

impl EventTrain {
    pub fn new(onsets: Vec<f64>, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "duration must be positive and finite, got {duration}"
            )));
        }
        for (i, &t) in onsets.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t > duration {
                return Err(Error::InvalidInput(format!(
                    "onset #{i} = {t} outside [0, {duration}]"
                )));
            }
            if i > 0 && t <= onsets[i - 1] {
                return Err(Error::InvalidInput(format!(
                    "onsets not strictly increasing at #{i} ({} then {t})",
                    onsets[i - 1]
                )));
            }
        }
        Ok(Self { onsets, duration })
    }

    pub fn onsets(&self) -> &[f64] {
        &self.onsets
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }
}

/// One row of a trial table as recorded, before covariates are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrial {
    pub trial_idx: u32,
    pub stim_onset_s: f64,
    /// Response timestamp from session start; `None` for a miss.
    pub response_time_s: Option<f64>,
    /// Reaction time; `None` for a miss.
    pub rt_s: Option<f64>,
    pub negative: bool,
    pub correct: bool,
}

/// Per-trial covariates entering the amplitude link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialCovariates {
    /// Kernel anchor `ρ_j`; absent for missed trials.
    pub response_time_s: Option<f64>,
    pub raw_rt_s: Option<f64>,
    pub negative: bool,
    /// z-scored log reaction time; zero for misses.
    pub x_rt: f64,
    pub error: bool,
}

impl TrialCovariates {
    /// `[x_neg, x_rt, x_err]`.
    #[inline]
    pub fn covariates(&self) -> [f64; 3] {
        [
            f64::from(u8::from(self.negative)),
            self.x_rt,
            f64::from(u8::from(self.error)),
        ]
    }
}

/// Derives per-trial covariates for one subject.
///
/// Log reaction times are z-scored over answered trials using the population
/// standard deviation; zero variance maps every `x_rt` to 0. Misses get
/// `x_rt = 0`, `x_err = 1` and no response anchor.
pub fn build_covariates(trials: &[RawTrial]) -> Result<Vec<TrialCovariates>> {
    let mut logs = Vec::with_capacity(trials.len());
    for t in trials {
        match (t.response_time_s, t.rt_s) {
            (Some(resp), Some(rt)) => {
                if !(rt > 0.0) || !rt.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "trial {}: reaction time must be positive, got {rt}",
                        t.trial_idx
                    )));
                }
                if !resp.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "trial {}: non-finite response time",
                        t.trial_idx
                    )));
                }
                logs.push(rt.ln());
            }
            (None, None) => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "trial {}: response time and reaction time must both be present or both absent",
                    t.trial_idx
                )))
            }
        }
    }
    if logs.len() < 2 {
        return Err(Error::DegenerateSubject(format!(
            "need at least 2 answered trials to z-score reaction times, got {}",
            logs.len()
        )));
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();

    Ok(trials
        .iter()
        .map(|t| match t.rt_s {
            Some(rt) => TrialCovariates {
                response_time_s: t.response_time_s,
                raw_rt_s: Some(rt),
                negative: t.negative,
                x_rt: if sd > 0.0 { (rt.ln() - mean) / sd } else { 0.0 },
                error: !t.correct,
            },
            None => TrialCovariates {
                response_time_s: None,
                raw_rt_s: None,
                negative: t.negative,
                x_rt: 0.0,
                error: true,
            },
        })
        .collect())
}

/// Waveform-level annotations used only by the summary-feature baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryAnnotations {
    /// `(time_s, conductance)` pairs, time-ordered.
    pub tonic_samples: Vec<(f64, f64)>,
    pub scr_amplitudes: Vec<f64>,
    pub scr_rise_times_s: Vec<f64>,
}

/// Everything known about one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub events: EventTrain,
    pub raw_trials: Vec<RawTrial>,
    pub trials: Vec<TrialCovariates>,
    pub annotations: Option<SummaryAnnotations>,
}

impl SubjectRecord {
    pub fn new(
        subject_id: impl Into<String>,
        events: EventTrain,
        mut raw_trials: Vec<RawTrial>,
        annotations: Option<SummaryAnnotations>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        raw_trials.sort_by_key(|t| t.trial_idx);
        let t_end = events.duration();
        for t in &raw_trials {
            if let Some(r) = t.response_time_s {
                if r < 0.0 || r > t_end {
                    return Err(Error::InvalidInput(format!(
                        "subject {subject_id}, trial {}: response time {r} outside [0, {t_end}]",
                        t.trial_idx
                    )));
                }
            }
        }
        let trials = build_covariates(&raw_trials)
            .map_err(|e| prefix_subject(&subject_id, e))?;
        Ok(Self {
            subject_id,
            events,
            raw_trials,
            trials,
            annotations,
        })
    }
}

fn prefix_subject(id: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("subject {id}: {m}")),
        Error::DegenerateSubject(m) => Error::DegenerateSubject(format!("subject {id}: {m}")),
        other => other,
    }
}

/// Amplitude `A_j` of one trial's kernel in events/second.
///
/// # Panics
/// On a homogeneous parameter set, which has no kernels.
pub fn amplitude(params: &ModelParams, trial: &TrialCovariates) -> f64 {
    assert!(
        params.variant != Variant::Homogeneous,
        "amplitude is undefined for the homogeneous model"
    );
    params.a0 * params.log_gain(&trial.covariates()).exp()
}

/// Conditional intensity at time `t`, by direct summation over trials.
pub fn intensity_at(params: &ModelParams, trials: &[TrialCovariates], t: f64) -> f64 {
    if params.variant == Variant::Homogeneous {
        return params.mu;
    }
    let kernels: f64 = trials
        .iter()
        .filter_map(|tr| tr.response_time_s.map(|rho| (rho, tr)))
        .filter(|(rho, _)| t >= *rho)
        .map(|(rho, tr)| amplitude(params, tr) * (-(t - rho) / params.tau).exp())
        .sum();
    params.mu + kernels
}

/// Expected event count on `[0, t]`, in closed form.
pub fn compensator(params: &ModelParams, trials: &[TrialCovariates], t: f64) -> f64 {
    let base = params.mu * t;
    if params.variant == Variant::Homogeneous {
        return base;
    }
    let tau = params.tau;
    base + trials
        .iter()
        .filter_map(|tr| tr.response_time_s.map(|rho| (rho, tr)))
        .filter(|(rho, _)| *rho <= t)
        .map(|(rho, tr)| amplitude(params, tr) * tau * -(-(t - rho) / tau).exp_m1())
        .sum::<f64>()
}

/// Time bins of width `dt` covering `[0, duration]`; the final bin may be
/// shorter when `duration` is not a multiple of `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub dt: f64,
    pub duration: f64,
    pub n_bins: usize,
}

impl BinGrid {
    pub fn new(dt: f64, duration: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        if !(duration >= dt && duration.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "duration {duration} must be finite and at least dt = {dt}"
            )));
        }
        let ratio = duration / dt;
        let nearest = ratio.round();
        let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            ratio.ceil()
        };
        Ok(Self {
            dt,
            duration,
            n_bins: n as usize,
        })
    }

    pub fn start(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn width(&self, k: usize) -> f64 {
        if k + 1 == self.n_bins {
            (self.duration - self.start(k)).max(0.0)
        } else {
            self.dt
        }
    }

    /// Midpoint of bin `k`; `(k + 0.5)·dt` for every full bin.
    pub fn center(&self, k: usize) -> f64 {
        self.start(k) + 0.5 * self.width(k)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.center(k)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.width(k)).collect()
    }

    /// Bin containing `t`; `t == duration` maps to the last bin.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).floor() as usize).min(self.n_bins - 1)
    }
}

/// Answered trials sorted by response time, with their covariates.
#[derive(Debug, Clone)]
pub(crate) struct Triggers {
    pub times: Vec<f64>,
    pub cov: Vec<[f64; 3]>,
}

impl Triggers {
    pub fn new(trials: &[TrialCovariates]) -> Self {
        let mut pairs: Vec<(f64, [f64; 3])> = trials
            .iter()
            .filter_map(|t| t.response_time_s.map(|r| (r, t.covariates())))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, cov) = pairs.into_iter().unzip();
        Self { times, cov }
    }
}

/// Kernel sums at one evaluation time, all per unit `A₀`:
/// `base = Σ g_j k_j`, `cov[c] = Σ x_jc g_j k_j`, `moment = Σ g_j k_j (t - ρ_j)`,
/// with `g_j = exp(w·x_j)` and `k_j = exp(-(t - ρ_j)/τ)`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KernelSums {
    pub base: f64,
    pub cov: [f64; 3],
    pub moment: f64,
}

/// Kernel sums at sorted evaluation times by a forward recursion: between
/// evaluations every active kernel decays by the same factor, so each sum is
/// carried forward and only newly triggered kernels are added.
pub(crate) fn kernel_sums(params: &ModelParams, triggers: &Triggers, times: &[f64]) -> Vec<KernelSums> {
    let mut out = Vec::with_capacity(times.len());
    if params.variant == Variant::Homogeneous {
        out.resize(times.len(), KernelSums::default());
        return out;
    }
    let tau = params.tau;
    let mut s = KernelSums::default();
    let mut next = 0usize;
    let mut t_prev = times.first().copied().unwrap_or(0.0);
    for &t in times {
        let step = t - t_prev;
        if step != 0.0 {
            let decay = (-step / tau).exp();
            s.moment = decay * (s.moment + step * s.base);
            s.base *= decay;
            for c in &mut s.cov {
                *c *= decay;
            }
        }
        while next < triggers.times.len() && triggers.times[next] <= t {
            let x = &triggers.cov[next];
            let u = t - triggers.times[next];
            let g = params.log_gain(x).exp() * (-u / tau).exp();
            s.base += g;
            s.moment += g * u;
            for c in 0..3 {
                s.cov[c] += x[c] * g;
            }
            next += 1;
        }
        out.push(s);
        t_prev = t;
    }
    out
}

/// Intensity at every bin center of `grid`.
pub fn intensity_binned(params: &ModelParams, trials: &[TrialCovariates], grid: &BinGrid) -> Vec<f64> {
    intensity_at_sorted(params, &Triggers::new(trials), &grid.centers())
}

pub(crate) fn intensity_at_sorted(params: &ModelParams, triggers: &Triggers, times: &[f64]) -> Vec<f64> {
    kernel_sums(params, triggers, times)
        .into_iter()
        .map(|s| params.mu + params.a0 * s.base)
        .collect()
}
