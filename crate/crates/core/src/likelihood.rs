//! Binned Poisson negative log-likelihood, ridge penalty and analytic gradient.
//!
//! With counts `y_k` in bins of width `w_k` centred at `t_k`:
//!
//! ```text
//! nll(θ) = Σ_k λ(t_k) w_k − Σ_k y_k log(λ(t_k) w_k)
//! ```
//!
//! The penalized objective adds `Σ_c λ_c w_c²` over the three covariate
//! weights (FULL variant only). AIC is always computed from the raw `nll`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kernel_sums, BinGrid, EventTrain, ModelParams, TrialCovariates, Triggers, Variant};

/// Event counts per time bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub counts: Vec<u32>,
    pub grid: BinGrid,
}

impl BinnedCounts {
    pub fn new(counts: Vec<u32>, grid: BinGrid) -> Result<Self> {
        if counts.len() != grid.n_bins {
            return Err(Error::InvalidInput(format!(
                "{} counts for a grid of {} bins",
                counts.len(),
                grid.n_bins
            )));
        }
        Ok(Self { counts, grid })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    pub fn duration(&self) -> f64 {
        self.grid.duration
    }
}

/// Counts onsets in `[k·dt, (k+1)·dt)`; an onset exactly at the end of the
/// window goes in the last bin.
pub fn bin_events(events: &EventTrain, dt: f64) -> Result<BinnedCounts> {
    let grid = BinGrid::new(dt, events.duration())?;
    let mut counts = vec![0u32; grid.n_bins];
    for &t in events.onsets() {
        counts[grid.index_of(t)] += 1;
    }
    BinnedCounts::new(counts, grid)
}

/// Ridge strengths on `w_neg`, `w_rt`, `w_err`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    pub lambda_neg: f64,
    pub lambda_rt: f64,
    pub lambda_err: f64,
}

impl Default for RidgeConfig {
    /// Errors are rare, so their weight is shrunk harder.
    fn default() -> Self {
        Self {
            lambda_neg: 1.0,
            lambda_rt: 1.0,
            lambda_err: 5.0,
        }
    }
}

impl RidgeConfig {
    pub fn zero() -> Self {
        Self {
            lambda_neg: 0.0,
            lambda_rt: 0.0,
            lambda_err: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_neg, self.lambda_rt, self.lambda_err];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("ridge strengths must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    fn strengths(&self) -> [f64; 3] {
        [self.lambda_neg, self.lambda_rt, self.lambda_err]
    }
}

pub fn penalty(params: &ModelParams, ridge: &RidgeConfig) -> f64 {
    if params.variant != Variant::Full {
        return 0.0;
    }
    ridge.lambda_neg * params.w_neg * params.w_neg
        + ridge.lambda_rt * params.w_rt * params.w_rt
        + ridge.lambda_err * params.w_err * params.w_err
}

/// A subject's data prepared for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Objective {
    triggers: Triggers,
    centers: Vec<f64>,
    widths: Vec<f64>,
    counts: Vec<f64>,
    ridge: RidgeConfig,
}

/// Objective value, raw NLL and gradient in canonical parameter order
/// `(μ, A₀, w_neg, w_rt, w_err, τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub nll: f64,
    pub gradient: [f64; 6],
}

impl Objective {
    pub fn new(trials: &[TrialCovariates], counts: &BinnedCounts, ridge: RidgeConfig) -> Self {
        Self {
            triggers: Triggers::new(trials),
            centers: counts.grid.centers(),
            widths: counts.grid.widths(),
            counts: counts.counts.iter().map(|&c| f64::from(c)).collect(),
            ridge,
        }
    }

    pub fn n_events(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn duration(&self) -> f64 {
        self.widths.iter().sum()
    }

    pub fn n_triggers(&self) -> usize {
        self.triggers.times.len()
    }

    pub fn ridge(&self) -> &RidgeConfig {
        &self.ridge
    }

    pub fn nll(&self, params: &ModelParams) -> Result<f64> {
        self.evaluate_inner(params, false).map(|e| e.nll)
    }

    pub fn value(&self, params: &ModelParams) -> Result<f64> {
        self.evaluate_inner(params, false).map(|e| e.objective)
    }

    pub fn evaluate(&self, params: &ModelParams) -> Result<Evaluation> {
        self.evaluate_inner(params, true)
    }

    fn evaluate_inner(&self, params: &ModelParams, with_grad: bool) -> Result<Evaluation> {
        let sums = kernel_sums(params, &self.triggers, &self.centers);
        let mut nll = 0.0;
        let mut g = [0.0; 6];
        for (k, s) in sums.iter().enumerate() {
            let lambda = params.mu + params.a0 * s.base;
            let w = self.widths[k];
            let y = self.counts[k];
            if !lambda.is_finite() {
                return Err(Error::Numerical(format!("non-finite intensity at bin {k}: {params:?}")));
            }
            let mass = lambda * w;
            nll += mass;
            if y > 0.0 {
                if !(mass > 0.0) {
                    return Err(Error::Numerical(format!(
                        "non-positive intensity {lambda} in bin {k} holding {y} events"
                    )));
                }
                nll -= y * mass.ln();
            }
            if with_grad {
                let r = w - y / lambda;
                g[0] += r;
                g[1] += r * s.base;
                g[2] += r * s.cov[0];
                g[3] += r * s.cov[1];
                g[4] += r * s.cov[2];
                g[5] += r * s.moment;
            }
        }
        if !nll.is_finite() {
            return Err(Error::Numerical(format!("non-finite nll at {params:?}")));
        }
        let pen = penalty(params, &self.ridge);
        let gradient = if with_grad {
            finish_gradient(params, &self.ridge, g)
        } else {
            [0.0; 6]
        };
        Ok(Evaluation {
            objective: nll + pen,
            nll,
            gradient,
        })
    }
}

fn finish_gradient(params: &ModelParams, ridge: &RidgeConfig, raw: [f64; 6]) -> [f64; 6] {
    let mut g = [0.0; 6];
    g[0] = raw[0];
    match params.variant {
        Variant::Homogeneous => {}
        Variant::TrialModulated => {
            g[1] = raw[1];
            g[5] = raw[5] * params.a0 / (params.tau * params.tau);
        }
        Variant::Full => {
            let w = [params.w_neg, params.w_rt, params.w_err];
            let lam = ridge.strengths();
            g[1] = raw[1];
            for c in 0..3 {
                g[2 + c] = params.a0 * raw[2 + c] + 2.0 * lam[c] * w[c];
            }
            g[5] = raw[5] * params.a0 / (params.tau * params.tau);
        }
    }
    g
}

pub fn nll(params: &ModelParams, trials: &[TrialCovariates], counts: &BinnedCounts) -> Result<f64> {
    Objective::new(trials, counts, RidgeConfig::zero()).nll(params)
}

pub fn objective(
    params: &ModelParams,
    trials: &[TrialCovariates],
    counts: &BinnedCounts,
    ridge: &RidgeConfig,
) -> Result<f64> {
    Objective::new(trials, counts, *ridge).value(params)
}

/// Analytic gradient of the penalized objective in canonical order; entries
/// the variant does not use are zero.
pub fn gradient(
    params: &ModelParams,
    trials: &[TrialCovariates],
    counts: &BinnedCounts,
    ridge: &RidgeConfig,
) -> Result<[f64; 6]> {
    Objective::new(trials, counts, *ridge)
        .evaluate(params)
        .map(|e| e.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn counts(c: Vec<u32>, dt: f64, t: f64) -> BinnedCounts {
        BinnedCounts::new(c, BinGrid::new(dt, t).unwrap()).unwrap()
    }

    #[test]
    fn binning_examples() {
        let empty = EventTrain::new(vec![], 5.0).unwrap();
        assert_eq!(bin_events(&empty, 1.0).unwrap().counts, vec![0; 5]);
        let e = EventTrain::new(vec![0.5, 0.7, 3.2], 5.0).unwrap();
        assert_eq!(bin_events(&e, 1.0).unwrap().counts, vec![2, 0, 0, 1, 0]);
        let edge = EventTrain::new(vec![5.0], 5.0).unwrap();
        assert_eq!(bin_events(&edge, 1.0).unwrap().counts, vec![0, 0, 0, 0, 1]);
    }

    #[test]
    fn homogeneous_nll_examples() {
        let h = ModelParams::homogeneous(0.1);
        let no_events = counts(vec![0; 30], 1.0, 30.0);
        assert_relative_eq!(nll(&h, &[], &no_events).unwrap(), 3.0, epsilon = 1e-12);
        let c = counts(vec![1, 0], 1.0, 2.0);
        assert_relative_eq!(nll(&h, &[], &c).unwrap(), 2.5025850929940457, epsilon = 1e-12);
    }

    #[test]
    fn penalty_examples() {
        let r = RidgeConfig {
            lambda_neg: 1.0,
            lambda_rt: 0.0,
            lambda_err: 0.0,
        };
        assert_eq!(penalty(&ModelParams::full(0.1, 0.1, 0.0, 0.0, 0.0, 1.0), &r), 0.0);
        assert_eq!(penalty(&ModelParams::full(0.1, 0.1, 1.0, 0.0, 0.0, 1.0), &r), 1.0);
        let d = RidgeConfig::default();
        let p1 = ModelParams::full(0.1, 0.1, 0.3, -0.2, 0.5, 1.0);
        let p2 = ModelParams::full(0.1, 0.1, 0.6, -0.4, 1.0, 1.0);
        assert_relative_eq!(penalty(&p2, &d), 4.0 * penalty(&p1, &d), max_relative = 1e-14);
        assert_eq!(penalty(&p1.restrict(Variant::TrialModulated), &d), 0.0);
    }

    #[test]
    fn homogeneous_stationary_at_rate() {
        let c = counts(vec![2, 0, 1, 3, 0, 0, 1, 1, 0, 2], 1.0, 10.0);
        let mu = c.total() as f64 / 10.0;
        let g = gradient(&ModelParams::homogeneous(mu), &[], &c, &RidgeConfig::default()).unwrap();
        assert!(g[0].abs() < 1e-12);
        assert!(g[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ridge_gradient_term() {
        let trials = vec![TrialCovariates {
            response_time_s: Some(1.0),
            raw_rt_s: Some(0.5),
            negative: false,
            x_rt: 0.0,
            error: false,
        }];
        let c = counts(vec![0, 1, 0, 0], 1.0, 4.0);
        let p = ModelParams::full(0.1, 0.2, 0.7, -0.3, 0.4, 2.0);
        let r = RidgeConfig::default();
        let g0 = gradient(&p, &trials, &c, &RidgeConfig::zero()).unwrap();
        let g1 = gradient(&p, &trials, &c, &r).unwrap();
        assert_relative_eq!(g1[2] - g0[2], 2.0 * 1.0 * 0.7, epsilon = 1e-12);
        assert_relative_eq!(g1[3] - g0[3], 2.0 * 1.0 * -0.3, epsilon = 1e-12);
        assert_relative_eq!(g1[4] - g0[4], 2.0 * 5.0 * 0.4, epsilon = 1e-12);
    }

    #[test]
    fn zero_intensity_with_events_is_numerical_error() {
        let c = counts(vec![1], 1.0, 1.0);
        let bad = ModelParams::homogeneous(0.0);
        assert!(matches!(nll(&bad, &[], &c), Err(Error::Numerical(_))));
    }
}
