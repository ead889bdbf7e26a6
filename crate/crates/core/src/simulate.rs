//! Synthetic trial schedules, event trains and labeled cohorts drawn from
//! known parameters.
//!
//! Exact simulation uses superposition: the baseline contributes a
//! homogeneous Poisson train, and every kernel independently contributes a
//! Poisson number of events whose delays follow the exponential truncated at
//! the end of the session. No thinning step is needed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::BinnedCounts;
use crate::model::{
    amplitude, build_covariates, intensity_binned, BinGrid, EventTrain, ModelParams, RawTrial, SubjectRecord,
    SummaryAnnotations, TrialCovariates, Variant,
};
use crate::optim::BoxBounds;
use crate::seed;

/// Pacing of the simulated task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialScheduleConfig {
    pub n_blocks: usize,
    pub trials_per_block: usize,
    /// Rest at the start of every block.
    pub rest_s: f64,
    pub stimulus_s: f64,
    /// Gap after the stimulus before the next trial starts.
    pub inter_trial_s: f64,
    /// Fraction of negative-valence words in each block.
    pub p_negative: f64,
    /// Probability of an incorrect (answered) response.
    pub p_error: f64,
    /// Probability of a missed response.
    pub p_miss: f64,
    /// Log-normal reaction times: `(mean, sd)` of `log(rt_s)`.
    pub rt_lognormal: (f64, f64),
}

impl Default for TrialScheduleConfig {
    fn default() -> Self {
        Self {
            n_blocks: 4,
            trials_per_block: 120,
            rest_s: 30.0,
            stimulus_s: 0.5,
            inter_trial_s: 1.5,
            p_negative: 0.5,
            p_error: 0.03,
            p_miss: 0.01,
            rt_lognormal: (-0.6, 0.25),
        }
    }
}

impl TrialScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [("p_negative", self.p_negative), ("p_error", self.p_error), ("p_miss", self.p_miss)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.p_error + self.p_miss > 1.0 {
            return Err(Error::Config("p_error + p_miss exceeds 1".into()));
        }
        let durations = [
            ("rest_s", self.rest_s),
            ("stimulus_s", self.stimulus_s),
            ("inter_trial_s", self.inter_trial_s),
        ];
        for (name, d) in durations {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {d}")));
            }
        }
        if self.n_blocks == 0 || self.trials_per_block == 0 {
            return Err(Error::Config("schedule needs at least one block and one trial".into()));
        }
        if !(self.rt_lognormal.1 > 0.0) {
            return Err(Error::Config("reaction-time log-sd must be > 0".into()));
        }
        Ok(())
    }
}

/// A generated task session.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub raw_trials: Vec<RawTrial>,
    pub trials: Vec<TrialCovariates>,
    /// End of the last block.
    pub duration: f64,
}

pub fn gen_trial_schedule(config: &TrialScheduleConfig, seed: u64) -> Result<Schedule> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let rt_dist = LogNormal::new(config.rt_lognormal.0, config.rt_lognormal.1)
        .map_err(|e| Error::Config(format!("reaction-time distribution: {e}")))?;
    let slot = config.stimulus_s + config.inter_trial_s;
    let n_total = config.n_blocks * config.trials_per_block;
    let mut raw = Vec::with_capacity(n_total);
    let mut t = 0.0;
    for _ in 0..config.n_blocks {
        t += config.rest_s;
        let n_neg = (config.p_negative * config.trials_per_block as f64).round() as usize;
        let mut valence: Vec<bool> = (0..config.trials_per_block).map(|i| i < n_neg).collect();
        valence.shuffle(&mut rng);
        for negative in valence {
            let stim = t;
            let rt: f64 = rt_dist.sample(&mut rng);
            let u: f64 = rng.random();
            let (rt_s, correct) = if u < config.p_miss {
                (None, false)
            } else if u < config.p_miss + config.p_error {
                (Some(rt), false)
            } else {
                (Some(rt), true)
            };
            raw.push(RawTrial {
                trial_idx: raw.len() as u32,
                stim_onset_s: stim,
                response_time_s: rt_s.map(|r| stim + r),
                rt_s,
                negative,
                correct,
            });
            t += slot;
        }
    }
    let duration = t;
    for r in &mut raw {
        // A response after the session ends is recorded as a miss.
        if r.response_time_s.is_some_and(|v| v > duration) {
            r.response_time_s = None;
            r.rt_s = None;
            r.correct = false;
        }
    }
    let trials = build_covariates(&raw)?;
    Ok(Schedule {
        raw_trials: raw,
        trials,
        duration,
    })
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Exact continuous-time draw of an event train on `[0, duration]`.
pub fn simulate_exact(
    params: &ModelParams,
    trials: &[TrialCovariates],
    duration: f64,
    seed: u64,
) -> Result<EventTrain> {
    params.validate()?;
    let mut rng = seed::rng(seed);
    let mut times = Vec::new();
    let n0 = poisson(&mut rng, params.mu * duration);
    for _ in 0..n0 {
        times.push(rng.random::<f64>() * duration);
    }
    if params.variant != Variant::Homogeneous {
        let tau = params.tau;
        for tr in trials {
            let Some(rho) = tr.response_time_s else { continue };
            if rho > duration {
                continue;
            }
            // Kernel mass left before the window closes: A τ (1 − e^{−L/τ}).
            let tail = -(-(duration - rho) / tau).exp_m1();
            let n = poisson(&mut rng, amplitude(params, tr) * tau * tail);
            for _ in 0..n {
                let u: f64 = rng.random();
                let delay = -tau * (-u * tail).ln_1p();
                times.push((rho + delay).min(duration));
            }
        }
    }
    times.sort_by(f64::total_cmp);
    dedup_times(&mut times, duration);
    EventTrain::new(times, duration)
}

const JITTER_S: f64 = 1e-6;

/// Makes sorted times strictly increasing by pushing coincident ones forward
/// in 1 µs steps, pulling back from the end of the window if needed.
fn dedup_times(times: &mut [f64], duration: f64) {
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            times[i] = times[i - 1] + JITTER_S;
        }
    }
    let n = times.len();
    if n > 0 && times[n - 1] > duration {
        times[n - 1] = duration;
        for i in (0..n - 1).rev() {
            if times[i] >= times[i + 1] {
                times[i] = times[i + 1] - JITTER_S;
            }
        }
    }
}

/// Independent Poisson counts per bin with mean `λ(t_k)·w_k`.
pub fn simulate_binned(
    params: &ModelParams,
    trials: &[TrialCovariates],
    grid: &BinGrid,
    seed: u64,
) -> Result<BinnedCounts> {
    params.validate()?;
    let mut rng = seed::rng(seed);
    let lambda = intensity_binned(params, trials, grid);
    let counts = lambda
        .iter()
        .enumerate()
        .map(|(k, l)| poisson(&mut rng, l * grid.width(k)) as u32)
        .collect();
    BinnedCounts::new(counts, *grid)
}

/// Per-parameter normal distribution, truncated to the box bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDistribution {
    pub variant: Variant,
    /// Canonical order `(μ, A₀, w_neg, w_rt, w_err, τ)`.
    pub mean: [f64; 6],
    pub sd: [f64; 6],
}

impl ParamDistribution {
    pub fn fixed(p: ModelParams) -> Self {
        Self {
            variant: p.variant,
            mean: p.to_array(),
            sd: [0.0; 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub label: String,
    pub n_subjects: usize,
    pub params: ParamDistribution,
}

/// Recipe for a synthetic labeled cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub schedule: TrialScheduleConfig,
    #[serde(default)]
    pub bounds: BoxBounds,
    /// Also draw summary annotations (i.i.d. across groups, so they carry no
    /// group signal).
    #[serde(default)]
    pub with_annotations: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Reference parameters used throughout the synthetic checks.
pub fn reference_params() -> ModelParams {
    ModelParams::full(0.05, 0.3, 0.8, 0.3, -0.5, 4.0)
}

impl CohortSpec {
    /// One group of `n` subjects sharing exactly `params`.
    pub fn fixed(label: &str, n: usize, params: ModelParams, seed: u64) -> Self {
        Self {
            groups: vec![GroupSpec {
                label: label.into(),
                n_subjects: n,
                params: ParamDistribution::fixed(params),
            }],
            schedule: TrialScheduleConfig::default(),
            bounds: BoxBounds::default(),
            with_annotations: false,
            seed,
        }
    }

    /// Controls and clinical subjects that differ only in the mean of
    /// `w_neg` (0 vs `shift`, sd 0.2); other parameters vary mildly around
    /// the reference values, identically in both groups.
    pub fn wneg_shift(n_per_group: usize, shift: f64, seed: u64) -> Self {
        let base = reference_params().to_array();
        let sd = [0.01, 0.05, 0.2, 0.1, 0.1, 0.5];
        let group = |label: &str, w_neg: f64| {
            let mut mean = base;
            mean[2] = w_neg;
            GroupSpec {
                label: label.into(),
                n_subjects: n_per_group,
                params: ParamDistribution {
                    variant: Variant::Full,
                    mean,
                    sd,
                },
            }
        };
        Self {
            groups: vec![group("C", 0.0), group("D", shift)],
            schedule: TrialScheduleConfig::default(),
            bounds: BoxBounds::default(),
            with_annotations: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.bounds.validate()?;
        if self.groups.is_empty() {
            return Err(Error::Config("cohort needs at least one group".into()));
        }
        let (lo, hi) = self.bounds.as_arrays();
        for g in &self.groups {
            if g.n_subjects == 0 {
                return Err(Error::Config(format!("group {} has no subjects", g.label)));
            }
            let used = used_indices(g.params.variant);
            for &i in used {
                let m = g.params.mean[i];
                let s = g.params.sd[i];
                if !(m >= lo[i] && m <= hi[i]) {
                    return Err(Error::Config(format!(
                        "group {}: mean {} = {m} outside bounds [{}, {}]",
                        g.label,
                        crate::model::PARAM_NAMES[i],
                        lo[i],
                        hi[i]
                    )));
                }
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::Config(format!("group {}: negative or non-finite sd", g.label)));
                }
            }
        }
        Ok(())
    }
}

fn used_indices(v: Variant) -> &'static [usize] {
    match v {
        Variant::Homogeneous => &[0],
        Variant::TrialModulated => &[0, 1, 5],
        Variant::Full => &[0, 1, 2, 3, 4, 5],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSubject {
    pub record: SubjectRecord,
    pub group: String,
    pub truth: Option<ModelParams>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CohortDataset {
    pub subjects: Vec<CohortSubject>,
}

impl CohortDataset {
    pub fn records(&self) -> Vec<SubjectRecord> {
        self.subjects.iter().map(|s| s.record.clone()).collect()
    }

    pub fn groups(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.group.clone()).collect()
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sd).expect("validated sd");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if v >= lo && v <= hi {
            return v;
        }
    }
    mean
}

fn synth_annotations(rng: &mut ChaCha8Rng, events: &EventTrain) -> SummaryAnnotations {
    let amp = LogNormal::new(0.3f64.ln(), 0.5).unwrap();
    let rise = LogNormal::new(1.5f64.ln(), 0.3).unwrap();
    let noise = Normal::new(0.0, 0.05).unwrap();
    let level = Normal::new(5.0, 1.0).unwrap().sample(rng);
    let slope = Normal::new(0.0, 0.002).unwrap().sample(rng);
    let n_samples = events.duration().floor() as usize + 1;
    SummaryAnnotations {
        tonic_samples: (0..n_samples)
            .map(|i| {
                let t = i as f64;
                (t, level + slope * t + noise.sample(rng))
            })
            .collect(),
        scr_amplitudes: events.onsets().iter().map(|_| amp.sample(rng)).collect(),
        scr_rise_times_s: events.onsets().iter().map(|_| rise.sample(rng)).collect(),
    }
}

/// Draws a labeled cohort. Subject `i` of group `g` is named
/// `<label><i+1:03>` and uses seed `derive(derive(spec.seed, g), i)` for its
/// parameters, schedule and events, so generation order does not matter.
pub fn gen_cohort(spec: &CohortSpec) -> Result<CohortDataset> {
    spec.validate()?;
    let (lo, hi) = spec.bounds.as_arrays();
    let jobs: Vec<(usize, usize)> = spec
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| (0..grp.n_subjects).map(move |i| (g, i)))
        .collect();
    let subjects = jobs
        .par_iter()
        .map(|&(g, i)| {
            let grp = &spec.groups[g];
            let s = seed::derive(seed::derive(spec.seed, g as u64), i as u64);
            let mut rng = seed::rng(s);
            let mut v = [0.0; 6];
            for &k in used_indices(grp.params.variant) {
                v[k] = truncated_normal(&mut rng, grp.params.mean[k], grp.params.sd[k], lo[k], hi[k]);
            }
            let params = ModelParams::from_array(v, grp.params.variant);
            let schedule = gen_trial_schedule(&spec.schedule, seed::derive(s, 1))?;
            let events = simulate_exact(&params, &schedule.trials, schedule.duration, seed::derive(s, 2))?;
            let annotations = spec
                .with_annotations
                .then(|| synth_annotations(&mut seed::rng(seed::derive(s, 3)), &events));
            let id = format!("{}{:03}", grp.label, i + 1);
            let record = SubjectRecord::new(id, events, schedule.raw_trials, annotations)?;
            Ok(CohortSubject {
                record,
                group: grp.label.clone(),
                truth: Some(params),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CohortDataset { subjects })
}
