use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgsb::{minimize, projected_gradient_norm, LbfgsbOptions};
use crate::error::{Error, Result};
use crate::likelihood::{bin_events, BinnedCounts, Objective, RidgeConfig};
use crate::model::{ModelParams, SubjectRecord, Variant};
use crate::seed;

/// Per-parameter box constraints. `w` applies to all three weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxBounds {
    pub mu: (f64, f64),
    pub a0: (f64, f64),
    pub w: (f64, f64),
    pub tau: (f64, f64),
}

impl Default for BoxBounds {
    fn default() -> Self {
        Self {
            mu: (1e-5, 1.0),
            a0: (1e-5, 5.0),
            w: (-5.0, 5.0),
            tau: (0.5, 30.0),
        }
    }
}

impl BoxBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("mu", self.mu), ("a0", self.a0), ("w", self.w), ("tau", self.tau)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bounds for {name}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        if self.mu.0 <= 0.0 || self.a0.0 <= 0.0 || self.tau.0 <= 0.0 {
            return Err(Error::Config("mu, a0 and tau lower bounds must be > 0".into()));
        }
        Ok(())
    }

    /// Bounds in canonical order `(μ, A₀, w_neg, w_rt, w_err, τ)`.
    pub fn as_arrays(&self) -> ([f64; 6], [f64; 6]) {
        (
            [self.mu.0, self.a0.0, self.w.0, self.w.0, self.w.0, self.tau.0],
            [self.mu.1, self.a0.1, self.w.1, self.w.1, self.w.1, self.tau.1],
        )
    }

    pub fn contains(&self, p: &ModelParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        match p.variant {
            Variant::Homogeneous => inside(p.mu, self.mu),
            Variant::TrialModulated => inside(p.mu, self.mu) && inside(p.a0, self.a0) && inside(p.tau, self.tau),
            Variant::Full => {
                inside(p.mu, self.mu)
                    && inside(p.a0, self.a0)
                    && [p.w_neg, p.w_rt, p.w_err].iter().all(|w| inside(*w, self.w))
                    && inside(p.tau, self.tau)
            }
        }
    }

    pub fn clamp(&self, p: &ModelParams) -> ModelParams {
        let (lo, hi) = self.as_arrays();
        let mut v = p.to_array();
        for i in 0..6 {
            v[i] = v[i].clamp(lo[i], hi[i]);
        }
        ModelParams::from_array(v, p.variant)
    }
}

/// Everything a per-subject fit needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub dt: f64,
    pub ridge: RidgeConfig,
    pub bounds: BoxBounds,
    pub n_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            dt: 1.0,
            ridge: RidgeConfig::default(),
            bounds: BoxBounds::default(),
            n_starts: 5,
            max_iter: 1000,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be >= 1".into()));
        }
        self.ridge.validate()?;
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    pub nll: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Projected-gradient infinity norm at the returned point, in the
    /// optimizer's coordinates (τ enters as log τ).
    pub grad_inf_norm: f64,
    pub n_restarts_used: usize,
    /// Set when the subject had no events and the fit fell back to the
    /// lower bounds.
    #[serde(default)]
    pub degenerate: bool,
}

/// The three nested fits of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSet {
    pub subject_id: String,
    pub homogeneous: FitReport,
    pub trial_modulated: FitReport,
    pub full: FitReport,
}

impl FitSet {
    pub fn get(&self, variant: Variant) -> &FitReport {
        match variant {
            Variant::Homogeneous => &self.homogeneous,
            Variant::TrialModulated => &self.trial_modulated,
            Variant::Full => &self.full,
        }
    }
}

/// Closed-form homogeneous fit: `μ̂ = n/T`, clipped to the bounds.
pub fn fit_homogeneous(counts: &BinnedCounts, bounds: &BoxBounds) -> Result<FitReport> {
    let n = counts.total() as f64;
    let t = counts.duration();
    let mu = (n / t).clamp(bounds.mu.0, bounds.mu.1);
    let params = ModelParams::homogeneous(mu);
    let eval = Objective::new(&[], counts, RidgeConfig::zero()).evaluate(&params)?;
    let pg = projected_gradient_norm(&[mu], &[eval.gradient[0]], &[bounds.mu.0], &[bounds.mu.1]);
    Ok(FitReport {
        params,
        nll: eval.nll,
        objective: eval.objective,
        converged: true,
        iterations: 0,
        grad_inf_norm: pg,
        n_restarts_used: 1,
        degenerate: n == 0.0,
    })
}

/// Data summary used by the deterministic first start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartHeuristic {
    pub n_events: f64,
    pub duration: f64,
    pub n_trials: usize,
}

const TAU0: f64 = 5.0;

/// Initial points for a multi-start fit.
///
/// The first is `μ = 0.5·n/T`, `A₀ = 0.5·n/(N·τ₀)`, `w = 0`, `τ₀ = 5 s`,
/// clamped to the box. The rest draw `μ`, `A₀`, `τ` log-uniformly and the
/// weights uniformly within the bounds. All points are tagged FULL; callers
/// restrict them to the variant being fit.
pub fn multi_start_points(bounds: &BoxBounds, n_starts: usize, seed: u64, h: &StartHeuristic) -> Vec<ModelParams> {
    let mut out = Vec::with_capacity(n_starts);
    if n_starts == 0 {
        return out;
    }
    let n_trials = h.n_trials.max(1) as f64;
    let first = ModelParams::full(
        0.5 * h.n_events / h.duration,
        0.5 * h.n_events / (n_trials * TAU0),
        0.0,
        0.0,
        0.0,
        TAU0,
    );
    out.push(bounds.clamp(&first));
    let mut rng = seed::rng(seed);
    let log_uniform = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| -> f64 {
        let v = rng.random_range(lo.ln()..=hi.ln()).exp();
        v.clamp(lo, hi)
    };
    for _ in 1..n_starts {
        let mu = log_uniform(&mut rng, bounds.mu);
        let a0 = log_uniform(&mut rng, bounds.a0);
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(bounds.w.0..=bounds.w.1)).collect();
        let tau = log_uniform(&mut rng, bounds.tau);
        out.push(ModelParams::full(mu, a0, w[0], w[1], w[2], tau));
    }
    out
}

/// Maps between canonical parameters and optimizer coordinates, where τ
/// enters as `log τ` and only the variant's free parameters appear.
struct Coordinates {
    variant: Variant,
    idx: &'static [usize],
}

impl Coordinates {
    fn new(variant: Variant) -> Self {
        let idx: &'static [usize] = match variant {
            Variant::Homogeneous => &[0],
            Variant::TrialModulated => &[0, 1, 5],
            Variant::Full => &[0, 1, 2, 3, 4, 5],
        };
        Self { variant, idx }
    }

    fn to_x(&self, p: &ModelParams) -> Vec<f64> {
        let v = p.to_array();
        self.idx.iter().map(|&i| if i == 5 { v[5].ln() } else { v[i] }).collect()
    }

    fn params_at(&self, x: &[f64]) -> ModelParams {
        let mut v = [0.0; 6];
        for (k, &i) in self.idx.iter().enumerate() {
            v[i] = if i == 5 { x[k].exp() } else { x[k] };
        }
        ModelParams::from_array(v, self.variant)
    }

    fn grad_x(&self, p: &ModelParams, g: &[f64; 6]) -> Vec<f64> {
        self.idx.iter().map(|&i| if i == 5 { g[5] * p.tau } else { g[i] }).collect()
    }

    fn bounds(&self, b: &BoxBounds) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = b.as_arrays();
        let map = |v: [f64; 6]| -> Vec<f64> { self.idx.iter().map(|&i| if i == 5 { v[5].ln() } else { v[i] }).collect() };
        (map(lo), map(hi))
    }
}

fn heuristic(subject: &SubjectRecord) -> StartHeuristic {
    StartHeuristic {
        n_events: subject.events.len() as f64,
        duration: subject.events.duration(),
        n_trials: subject.trials.iter().filter(|t| t.response_time_s.is_some()).count(),
    }
}

/// Fits one variant by multi-start box-constrained penalized maximum likelihood.
pub fn fit(variant: Variant, subject: &SubjectRecord, opts: &FitOptions) -> Result<FitReport> {
    fit_with_starts(variant, subject, opts, &[])
}

/// As [`fit`], with extra initial points tried after the generated ones.
pub fn fit_with_starts(
    variant: Variant,
    subject: &SubjectRecord,
    opts: &FitOptions,
    extra_starts: &[ModelParams],
) -> Result<FitReport> {
    opts.validate()?;
    let counts = bin_events(&subject.events, opts.dt)?;
    if variant == Variant::Homogeneous {
        return fit_homogeneous(&counts, &opts.bounds);
    }
    let objective = Objective::new(&subject.trials, &counts, opts.ridge);
    if subject.events.is_empty() {
        log::warn!("subject {}: no events, returning a degenerate {variant} fit", subject.subject_id);
        let b = &opts.bounds;
        let p = b.clamp(&ModelParams::full(b.mu.0, b.a0.0, 0.0, 0.0, 0.0, TAU0).restrict(variant));
        let e = objective.evaluate(&p)?;
        return Ok(FitReport {
            params: p,
            nll: e.nll,
            objective: e.objective,
            converged: false,
            iterations: 0,
            grad_inf_norm: f64::NAN,
            n_restarts_used: 0,
            degenerate: true,
        });
    }

    let coords = Coordinates::new(variant);
    let (lo, hi) = coords.bounds(&opts.bounds);
    let lopts = LbfgsbOptions {
        max_iter: opts.max_iter,
        ..LbfgsbOptions::default()
    };
    let mut starts = multi_start_points(&opts.bounds, opts.n_starts, opts.seed, &heuristic(subject));
    starts.extend_from_slice(extra_starts);

    let mut best: Option<(f64, super::lbfgsb::Minimum)> = None;
    let mut used = 0;
    for start in &starts {
        let x0 = coords.to_x(&opts.bounds.clamp(&start.restrict(variant)));
        used += 1;
        let run = minimize(
            |x| {
                let p = coords.params_at(x);
                let e = objective.evaluate(&p)?;
                Ok((e.objective, coords.grad_x(&p, &e.gradient)))
            },
            &x0,
            &lo,
            &hi,
            &lopts,
        );
        match run {
            Ok(m) => {
                if best.as_ref().is_none_or(|(f, _)| m.f < *f) {
                    best = Some((m.f, m));
                }
            }
            Err(e) => log::debug!("subject {}: start {start:?} failed: {e}", subject.subject_id),
        }
    }
    let Some((_, m)) = best else {
        return Err(Error::OptimizationFailed(format!(
            "subject {}: non-finite objective at every start of the {variant} fit",
            subject.subject_id
        )));
    };
    let params = opts.bounds.clamp(&coords.params_at(&m.x));
    let e = objective.evaluate(&params)?;
    Ok(FitReport {
        params,
        nll: e.nll,
        objective: e.objective,
        converged: m.converged,
        iterations: m.iterations,
        grad_inf_norm: m.pg_inf_norm,
        n_restarts_used: used,
        degenerate: false,
    })
}

/// Fits all three variants so that each richer model is also started from
/// the optimum of the one it nests.
pub fn fit_all(subject: &SubjectRecord, opts: &FitOptions) -> Result<FitSet> {
    let homogeneous = fit(Variant::Homogeneous, subject, opts)?;
    let near_homogeneous = ModelParams::trial_modulated(homogeneous.params.mu, opts.bounds.a0.0, TAU0);
    let trial_modulated = fit_with_starts(Variant::TrialModulated, subject, opts, &[near_homogeneous])?;
    let full = fit_with_starts(
        Variant::Full,
        subject,
        opts,
        &[trial_modulated.params.restrict(Variant::Full)],
    )?;
    Ok(FitSet {
        subject_id: subject.subject_id.clone(),
        homogeneous,
        trial_modulated,
        full,
    })
}

/// Fits every subject, in parallel on the current rayon pool. Each subject's
/// multi-start seed is derived from `opts.seed` and its id, so results do not
/// depend on thread count or input order.
pub fn fit_subjects(subjects: &[SubjectRecord], opts: &FitOptions) -> Result<Vec<FitSet>> {
    subjects
        .par_iter()
        .map(|s| {
            let local = FitOptions {
                seed: seed::derive_str(opts.seed, &s.subject_id),
                ..*opts
            };
            fit_all(s, &local)
        })
        .collect()
}
