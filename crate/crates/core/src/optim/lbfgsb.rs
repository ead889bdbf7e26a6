//! Limited-memory quasi-Newton minimization on a box.
//!
//! Each iteration builds an L-BFGS direction from the two-loop recursion over
//! the free variables (those not pinned at a bound by the gradient sign),
//! then backtracks along the projected path `P(x + α d)` until the Armijo
//! condition `f(x_α) ≤ f(x) + c·gᵀ(x_α − x)` holds. Every trial point is
//! projected, so the objective is never evaluated outside the box.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LbfgsbOptions {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖P(x − g) − x‖∞` falls below this.
    pub pg_tol: f64,
    /// Stop when an accepted step changes `f` by less than this, relatively.
    pub rel_tol: f64,
    pub armijo_c: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 1000,
            pg_tol: 1e-6,
            rel_tol: 1e-9,
            armijo_c: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub pg_inf_norm: f64,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Infinity norm of the projected gradient step `P(x − g) − x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lower[i], upper[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over `lower ≤ x ≤ upper` starting from the projection of `x0`.
///
/// `f` returns the value and gradient; an `Err` or non-finite value at a
/// trial point is treated as an infeasible step and backtracked from. Only a
/// failure at the starting point is returned as an error.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsbOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::InvalidInput("bound dimensions do not match x0".into()));
    }
    if (0..n).any(|i| !(lower[i] <= upper[i])) {
        return Err(Error::InvalidInput("lower bound exceeds upper bound".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite objective at the starting point".into()));
    }

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(opts.memory);
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if projected_gradient_norm(&x, &g, lower, upper) < opts.pg_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let mut d = two_loop(&g, &free, &s_hist, &y_hist);
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = steepest(&g, &free);
            gd = dot(&g, &d);
        }
        if !(gd < 0.0) {
            // Every free component has zero gradient.
            converged = true;
            break;
        }

        let mut step = if s_hist.is_empty() {
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / dmax).min(1.0)
        } else {
            1.0
        };

        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..opts.max_backtracks {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * d[i]).collect();
            project(&mut trial, lower, upper);
            let moved: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            if moved.iter().all(|v| *v == 0.0) {
                break;
            }
            evaluations += 1;
            if let Ok((ft, gt)) = f(&trial) {
                let decrease = dot(&g, &moved);
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + opts.armijo_c * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if s_hist.is_empty() {
                // No progress possible even along steepest descent.
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if s_hist.len() == opts.memory {
                s_hist.pop_front();
                y_hist.pop_front();
            }
            s_hist.push_back(s);
            y_hist.push_back(y);
        }

        let change = (fx - f_new).abs();
        let scale = fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if change <= opts.rel_tol * scale {
            converged = true;
            break;
        }
    }

    let pg_inf_norm = projected_gradient_norm(&x, &g, lower, upper);
    Ok(Minimum {
        x,
        f: fx,
        grad: g,
        iterations,
        evaluations,
        converged,
        pg_inf_norm,
    })
}

fn steepest(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter().zip(free).map(|(v, &fr)| if fr { -v } else { 0.0 }).collect()
}

fn two_loop(g: &[f64], free: &[bool], s_hist: &VecDeque<Vec<f64>>, y_hist: &VecDeque<Vec<f64>>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, &fr)| if fr { *x } else { 0.0 }).collect() };
    let mut q = mask(g);
    if s_hist.is_empty() {
        return q.into_iter().map(|v| -v).collect();
    }
    let m = s_hist.len();
    let ss: Vec<Vec<f64>> = s_hist.iter().map(|s| mask(s)).collect();
    let ys: Vec<Vec<f64>> = y_hist.iter().map(|y| mask(y)).collect();
    let mut alpha = vec![0.0; m];
    let mut rho = vec![0.0; m];
    for i in (0..m).rev() {
        let sy = dot(&ss[i], &ys[i]);
        rho[i] = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        alpha[i] = rho[i] * dot(&ss[i], &q);
        for k in 0..q.len() {
            q[k] -= alpha[i] * ys[i][k];
        }
    }
    let last = m - 1;
    let yy = dot(&ys[last], &ys[last]);
    let sy = dot(&ss[last], &ys[last]);
    let gamma = if yy > 0.0 && sy > 0.0 { sy / yy } else { 1.0 };
    for v in &mut q {
        *v *= gamma;
    }
    for i in 0..m {
        let beta = rho[i] * dot(&ys[i], &q);
        for k in 0..q.len() {
            q[k] += ss[i][k] * (alpha[i] - beta);
        }
    }
    q.into_iter().zip(free).map(|(v, &fr)| if fr { -v } else { 0.0 }).collect()
}
