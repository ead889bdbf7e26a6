//! Soft-margin RBF support vector classifier trained by sequential minimal
//! optimization.
//!
//! Solves the dual
//!
//! ```text
//! min_α ½ αᵀQα − Σα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j k(x_i, x_j)
//! ```
//!
//! with maximal-violating-pair selection using second-order information and
//! stops once the KKT gap `m(α) − M(α)` drops below the tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma {
    /// `1 / (d · Var(X))` over all entries of the training matrix.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: Gamma,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i` for each support vector.
    pub coef: Vec<f64>,
    pub b: f64,
    pub gamma: f64,
    pub c: f64,
    /// Dual multipliers of every training row, in input order.
    pub alpha: Vec<f64>,
    /// Final KKT gap `m(α) − M(α)`.
    pub kkt_residual: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

#[inline]
pub fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

pub fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(0, Vec::len);
    let n = (x.len() * d) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        k[i][i] = 1.0;
        for j in 0..i {
            let v = rbf(&x[i], &x[j], gamma);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

const TAU: f64 = 1e-12;

pub fn svm_train(x: &[Vec<f64>], y: &[f64], cfg: &SvmConfig) -> Result<SvmModel> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Training("feature and label counts differ".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Training("both classes must be present".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite feature value".into()));
    }
    if !(cfg.c > 0.0) {
        return Err(Error::Training(format!("C must be > 0, got {}", cfg.c)));
    }
    let gamma = match cfg.gamma {
        Gamma::Scale => default_gamma(x),
        Gamma::Value(g) => g,
    };
    let k = kernel_matrix(x, gamma);
    let c = cfg.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    let mut gap;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX && v < gmax {
                let bdiff = gmax - v;
                let mut a = k[i_sel][i_sel] + k[t][t] - 2.0 * k[i_sel][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(bdiff * bdiff) / a;
                if obj < best {
                    best = obj;
                    j_sel = t;
                }
            }
        }
        gap = gmax - gmin;
        if gap < cfg.tol || i_sel == usize::MAX || j_sel == usize::MAX {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::Training(format!(
                "SMO did not reach KKT tolerance {} within {} iterations (gap {gap})",
                cfg.tol, cfg.max_iter
            )));
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Offset from free multipliers, else the midpoint of the feasible range.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let dual_objective = 0.5 * (0..n).map(|t| alpha[t] * (grad[t] - 1.0)).sum::<f64>();
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: sv.iter().map(|&t| x[t].clone()).collect(),
        coef: sv.iter().map(|&t| alpha[t] * y[t]).collect(),
        b: -rho,
        gamma,
        c,
        alpha,
        kkt_residual: gap.max(0.0),
        dual_objective,
        iterations,
    })
}

/// `Σ α_i y_i k(x_i, x) + b`; positive means the `+1` class.
pub fn svm_decision(model: &SvmModel, x: &[f64]) -> f64 {
    model
        .support_vectors
        .iter()
        .zip(&model.coef)
        .map(|(sv, c)| c * rbf(sv, x, model.gamma))
        .sum::<f64>()
        + model.b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_separable() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let y = vec![-1.0, 1.0];
        let m = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        assert!(svm_decision(&m, &x[0]) < 0.0);
        assert!(svm_decision(&m, &x[1]) > 0.0);
        assert!(m.kkt_residual < 1e-3);
    }

    #[test]
    fn mirrored_pair_flips_sign() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![-1.0, 1.0];
        let m = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        for p in [0.3, 0.7, 2.0] {
            let a = svm_decision(&m, &[p]);
            let b = svm_decision(&m, &[-p]);
            assert!((a + b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(svm_train(&x, &[1.0, 1.0], &SvmConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn free_support_vectors_sit_on_margin() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.91).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
        let cfg = SvmConfig {
            c: 10.0,
            ..Default::default()
        };
        let m = svm_train(&x, &y, &cfg).unwrap();
        let mut checked = 0;
        for (i, a) in m.alpha.iter().enumerate() {
            if *a > 1e-8 && *a < cfg.c - 1e-8 {
                let s = svm_decision(&m, &x[i]);
                assert!((s.abs() - 1.0).abs() < 1e-3, "score {s}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}
