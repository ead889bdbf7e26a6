//! Group-difference statistics: Mann-Whitney U, Kruskal-Wallis,
//! Benjamini-Hochberg FDR and Cohen's d.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Midranks (1-based) and the tie term `Σ (t³ − t)` over tie groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyConfig {
    /// Use the exact null distribution when the combined sample size is at
    /// most this and there are no ties.
    pub exact_max_n: usize,
}

impl Default for MannWhitneyConfig {
    fn default() -> Self {
        Self { exact_max_n: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `min(U_x, U_y)`.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Number of arrangements of `n1 + n2` tie-free values giving each
/// `U_x = 0..=n1·n2`, by the recursion on whether the largest value belongs
/// to `x`.
fn u_distribution(n1: usize, n2: usize) -> Vec<f64> {
    let max_u = n1 * n2;
    // table[a][b] = distribution for sizes (a, b)
    let mut table: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for a in 0..=n1 {
        for b in 0..=n2 {
            let mut d = vec![0.0; a * b + 1];
            if a == 0 || b == 0 {
                d[0] = 1.0;
            } else {
                // Largest value in x: it exceeds all b values of y.
                for (u, c) in table[a - 1][b].iter().enumerate() {
                    d[u + b] += c;
                }
                for (u, c) in table[a][b - 1].iter().enumerate() {
                    d[u] += c;
                }
            }
            table[a][b] = d;
        }
    }
    let out = std::mem::take(&mut table[n1][n2]);
    debug_assert_eq!(out.len(), max_u + 1);
    out
}

/// Two-sided Mann-Whitney U test with midranks for ties.
///
/// Exact p-values come from enumerating the null distribution of U when the
/// samples are tie-free and small; otherwise the normal approximation with
/// tie and continuity corrections is used.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    mann_whitney_u_with(x, y, &MannWhitneyConfig::default())
}

pub fn mann_whitney_u_with(x: &[f64], y: &[f64], cfg: &MannWhitneyConfig) -> Result<MannWhitney> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("Mann-Whitney U needs two non-empty samples".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&all);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let u = u1.min(u2);

    if ties == 0.0 && n1 + n2 <= cfg.exact_max_n {
        let dist = u_distribution(n1, n2);
        let total: f64 = dist.iter().sum();
        let k = u.round() as usize;
        let tail: f64 = dist[..=k].iter().sum::<f64>() / total;
        return Ok(MannWhitney {
            u,
            p: (2.0 * tail).min(1.0),
            exact: true,
        });
    }

    let n = (n1 + n2) as f64;
    let mean = (n1 * n2) as f64 / 2.0;
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u1 - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * std_normal().sf(z)).min(1.0)
    };
    Ok(MannWhitney { u, p, exact: false })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

/// Kruskal-Wallis H with tie correction; p from the chi-squared tail.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput("Kruskal-Wallis needs at least two non-empty groups".into()));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let (ranks, ties) = midranks(&all);
    let mut offset = 0;
    let mut s = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        s += r * r / g.len() as f64;
        offset += g.len();
    }
    let df = groups.len() - 1;
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, df, p: 1.0 });
    }
    let h = ((12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction).max(0.0);
    let p = ChiSquared::new(df as f64).expect("df >= 1").sf(h);
    Ok(KruskalWallis { h, df, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub rejected: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up procedure at rate `q`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<FdrResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("FDR rate must be in (0, 1), got {q}")));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("p-values must lie in [0, 1]".into()));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let cutoff = (0..m)
        .rev()
        .find(|&i| p_values[order[i]] <= (i + 1) as f64 * q / m as f64);
    let mut rejected = vec![false; m];
    if let Some(k) = cutoff {
        for &idx in &order[..=k] {
            rejected[idx] = true;
        }
    }

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for i in (0..m).rev() {
        let idx = order[i];
        running = running.min(p_values[idx] * m as f64 / (i + 1) as f64);
        adjusted[idx] = running.min(1.0);
    }
    Ok(FdrResult { rejected, adjusted })
}

/// `(mean(x) − mean(y)) / s_pooled` with `(n − 1)`-weighted variances.
pub fn cohens_d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidInput("Cohen's d needs at least two values per group".into()));
    }
    let moments = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let ss = v.iter().map(|a| (a - m).powi(2)).sum::<f64>();
        (m, ss)
    };
    let (mx, ssx) = moments(x);
    let (my, ssy) = moments(y);
    let pooled = ((ssx + ssy) / (x.len() + y.len() - 2) as f64).sqrt();
    if pooled == 0.0 {
        return Err(Error::Undefined("Cohen's d with zero pooled standard deviation".into()));
    }
    Ok((mx - my) / pooled)
}

/// One feature compared between two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub feature: String,
    pub pair: String,
    pub u: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    /// NaN when the pooled sd is zero or a group has fewer than 2 values.
    pub d: f64,
    pub rejected: bool,
}

/// Mann-Whitney U, FDR and Cohen's d for every feature, comparing the control
/// group against each other group and against all others pooled. FDR runs
/// across features within each comparison. `d` is control minus other.
pub fn group_comparison_report(
    schema: &[String],
    rows: &[Vec<f64>],
    groups: &[String],
    control: &str,
    q: f64,
) -> Result<Vec<StatsRow>> {
    if rows.len() != groups.len() {
        return Err(Error::InvalidInput("one group label per row required".into()));
    }
    let mut others: Vec<&str> = groups.iter().map(String::as_str).filter(|g| *g != control).collect();
    others.sort_unstable();
    others.dedup();
    if others.is_empty() || !groups.iter().any(|g| g == control) {
        return Err(Error::InvalidInput(format!(
            "need control group '{control}' and at least one other group"
        )));
    }
    let mut pairs: Vec<(String, Vec<&str>)> = others
        .iter()
        .map(|g| (format!("{control}_vs_{g}"), vec![*g]))
        .collect();
    if others.len() > 1 {
        pairs.push((format!("{control}_vs_{}", others.join("+")), others.clone()));
    }

    let mut out = Vec::new();
    for (pair, members) in pairs {
        let mut block = Vec::with_capacity(schema.len());
        for (f, name) in schema.iter().enumerate() {
            let a: Vec<f64> = rows.iter().zip(groups).filter(|(_, g)| *g == control).map(|(r, _)| r[f]).collect();
            let b: Vec<f64> = rows
                .iter()
                .zip(groups)
                .filter(|(_, g)| members.contains(&g.as_str()))
                .map(|(r, _)| r[f])
                .collect();
            let mw = mann_whitney_u(&a, &b)?;
            let d = cohens_d(&a, &b).unwrap_or(f64::NAN);
            block.push(StatsRow {
                feature: name.clone(),
                pair: pair.clone(),
                u: mw.u,
                p_raw: mw.p,
                p_adjusted: f64::NAN,
                d,
                rejected: false,
            });
        }
        let fdr = bh_fdr(&block.iter().map(|r| r.p_raw).collect::<Vec<_>>(), q)?;
        for (i, r) in block.iter_mut().enumerate() {
            r.p_adjusted = fdr.adjusted[i];
            r.rejected = fdr.rejected[i];
        }
        out.extend(block);
    }
    Ok(out)
}

/// Kruskal-Wallis of one scalar across groups (e.g. a fit-quality metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwRow {
    pub metric: String,
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

pub fn group_kruskal_wallis(metric: &str, values: &[f64], groups: &[String]) -> Result<KwRow> {
    let mut labels: Vec<&str> = groups.iter().map(String::as_str).collect();
    labels.sort_unstable();
    labels.dedup();
    let samples: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| values.iter().zip(groups).filter(|(_, g)| g == l).map(|(v, _)| *v).collect())
        .collect();
    let kw = kruskal_wallis(&samples)?;
    Ok(KwRow {
        metric: metric.into(),
        h: kw.h,
        df: kw.df,
        p: kw.p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mwu_staircase_exact() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert_relative_eq!(r.p, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn mwu_identical_with_ties() {
        let x = [1.0, 2.0, 2.0, 3.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert!(!r.exact);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn mwu_swap_symmetry() {
        let x = [0.3, 1.2, 2.2, 5.0, 0.1];
        let y = [0.5, 3.1, 4.4, 6.0];
        let a = mann_whitney_u(&x, &y).unwrap();
        let b = mann_whitney_u(&y, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn u_distribution_counts() {
        // 3+3: C(6,3) = 20 arrangements.
        let d = u_distribution(3, 3);
        assert_eq!(d, vec![1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn kw_examples() {
        let same = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0]];
        let r = kruskal_wallis(&same).unwrap();
        assert_eq!((r.h, r.p), (0.0, 1.0));
        let stairs = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let r = kruskal_wallis(&stairs).unwrap();
        assert_relative_eq!(r.h, 7.2, epsilon = 1e-12);
        assert_eq!(r.df, 2);
        assert_relative_eq!(r.p, (-3.6f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn bh_examples() {
        let r = bh_fdr(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        assert!(r.rejected.iter().all(|&x| x));
        let ones = bh_fdr(&[1.0; 5], 0.05).unwrap();
        assert!(ones.rejected.iter().all(|&x| !x));
        assert!(ones.adjusted.iter().all(|&x| x == 1.0));
        // m = 1 reduces to p <= q.
        assert!(bh_fdr(&[0.05], 0.05).unwrap().rejected[0]);
        assert!(!bh_fdr(&[0.0501], 0.05).unwrap().rejected[0]);
    }

    #[test]
    fn bh_adjusted_monotone_in_sorted_order() {
        let p = [0.2, 0.001, 0.04, 0.03, 0.9, 0.011];
        let r = bh_fdr(&p, 0.1).unwrap();
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in idx.windows(2) {
            assert!(r.adjusted[w[0]] <= r.adjusted[w[1]]);
        }
    }

    #[test]
    fn cohens_d_properties() {
        let x = [1.0, 2.0, 3.0];
        let y = [0.0, 2.0, 4.0];
        assert_eq!(cohens_d(&x, &y).unwrap(), 0.0);
        let a = [1.0, 2.5, 3.0, 4.2];
        let b = [0.1, 0.4, 2.0];
        assert_relative_eq!(cohens_d(&a, &b).unwrap(), -cohens_d(&b, &a).unwrap());
        assert!(matches!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn report_has_one_row_per_feature_and_pair() {
        let schema = vec!["f0".to_string(), "f1".to_string()];
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let groups: Vec<String> = ["C", "C", "C", "D", "D", "D", "S", "S", "S"].iter().map(|s| s.to_string()).collect();
        let r = group_comparison_report(&schema, &rows, &groups, "C", 0.05).unwrap();
        assert_eq!(r.len(), 2 * 3);
        assert_eq!(r[4].pair, "C_vs_D+S");
    }
}
