//! Leave-one-feature-out ablation and permutation importance.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eval::{auroc, loso_evaluate, loso_folds, FoldModel, LosoConfig};
use super::features::FeatureTable;
use crate::error::{Error, Result};
use crate::gof::mean_sd;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub feature: String,
    pub auroc_full: f64,
    pub auroc_without: f64,
    /// Mean over seeds of `AUROC_without − AUROC_full`.
    pub delta: f64,
    pub delta_sd: f64,
    /// One-sided bootstrap p-value for a drop (`Δ < 0`).
    pub p_value: f64,
    pub significant: bool,
}

/// Held-out score of each subject averaged over seeds.
fn mean_scores(report: &super::EvalReport) -> Vec<f64> {
    let n = report.seeds[0].folds.len();
    let k = report.seeds.len() as f64;
    (0..n)
        .map(|i| report.seeds.iter().map(|s| s.folds[i].score).sum::<f64>() / k)
        .collect()
}

/// Resamples subjects with replacement within each class.
fn stratified_resample(labels: &[f64], rng: &mut impl Rng) -> Vec<usize> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0.0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] <= 0.0).collect();
    let mut out = Vec::with_capacity(labels.len());
    for class in [&pos, &neg] {
        for _ in 0..class.len() {
            out.push(class[rng.random_range(0..class.len())]);
        }
    }
    out
}

/// Removes each feature in turn and re-runs LOSO over the same seeds.
///
/// Significance is a paired bootstrap over subjects: seed-averaged held-out
/// scores of the full and reduced models are resampled jointly (stratified by
/// class) `n_boot` times, and `p` is the fraction of replicates with
/// `Δ ≥ 0`. The bootstrap stream is derived from the first seed.
pub fn ablate(table: &FeatureTable, cfg: &LosoConfig, seeds: &[u64], n_boot: usize) -> Result<Vec<AblationRow>> {
    if table.schema.len() < 2 {
        return Err(Error::InvalidInput("ablation needs at least 2 features".into()));
    }
    let full = loso_evaluate(table, cfg, seeds)?;
    let full_scores = mean_scores(&full);
    let labels = table.labels(&cfg.control);
    let mut rows = Vec::with_capacity(table.schema.len());
    for (j, name) in table.schema.iter().enumerate() {
        let reduced = table.without_feature(name)?;
        let without = loso_evaluate(&reduced, cfg, seeds)?;
        let deltas: Vec<f64> = without
            .seeds
            .iter()
            .zip(&full.seeds)
            .map(|(w, f)| w.pooled().auroc - f.pooled().auroc)
            .collect();
        let (delta, delta_sd) = mean_sd(&deltas);
        let red_scores = mean_scores(&without);
        let mut rng = seed::rng(seed::derive(seed::derive(seeds[0], 0x00AB_1A7E), j as u64));
        let mut not_lower = 0usize;
        for _ in 0..n_boot {
            let idx = stratified_resample(&labels, &mut rng);
            let l: Vec<f64> = idx.iter().map(|&i| labels[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| full_scores[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| red_scores[i]).collect();
            if auroc(&b, &l)? - auroc(&a, &l)? >= 0.0 {
                not_lower += 1;
            }
        }
        let p_value = if n_boot == 0 { 1.0 } else { (not_lower as f64 + 1.0) / (n_boot as f64 + 1.0) };
        rows.push(AblationRow {
            feature: name.clone(),
            auroc_full: full.mean_auroc(),
            auroc_without: without.mean_auroc(),
            delta,
            delta_sd,
            p_value,
            significant: p_value < 0.05,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    /// Mean AUROC drop over all seed × shuffle draws.
    pub mean_drop: f64,
    /// Monte Carlo sd of the drop.
    pub sd_drop: f64,
    pub n_draws: usize,
}

/// AUROC of held-out scores after column `feature` of the held-out rows is
/// replaced according to `perm` (subject `i` receives subject `perm[i]`'s value).
pub fn permuted_auroc(
    table: &FeatureTable,
    folds: &[FoldModel],
    control: &str,
    feature: usize,
    perm: &[usize],
) -> Result<f64> {
    if perm.len() != table.len() || feature >= table.schema.len() {
        return Err(Error::InvalidInput("permutation or feature index out of range".into()));
    }
    let labels = table.labels(control);
    let scores: Vec<f64> = folds
        .iter()
        .map(|f| {
            let mut row = table.rows[f.held_out].clone();
            row[feature] = table.rows[perm[f.held_out]][feature];
            f.score(&row)
        })
        .collect();
    auroc(&scores, &labels)
}

/// Permutation importance on the LOSO fold models. Not a Shapley attribution.
pub fn permutation_importance(
    table: &FeatureTable,
    cfg: &LosoConfig,
    seeds: &[u64],
    n_shuffles: usize,
) -> Result<Vec<ImportanceRow>> {
    if seeds.is_empty() || n_shuffles == 0 {
        return Err(Error::Evaluation("need at least one seed and one shuffle".into()));
    }
    let n = table.len();
    let identity: Vec<usize> = (0..n).collect();
    let mut drops = vec![Vec::with_capacity(seeds.len() * n_shuffles); table.schema.len()];
    for &s in seeds {
        let folds = loso_folds(table, cfg, s)?;
        let base = permuted_auroc(table, &folds, &cfg.control, 0, &identity)?;
        for (j, d) in drops.iter_mut().enumerate() {
            let mut rng = seed::rng(seed::derive(seed::derive(s, 0x5EED_F00D), j as u64));
            for _ in 0..n_shuffles {
                let mut perm = identity.clone();
                perm.shuffle(&mut rng);
                d.push(base - permuted_auroc(table, &folds, &cfg.control, j, &perm)?);
            }
        }
    }
    Ok(table
        .schema
        .iter()
        .zip(drops)
        .map(|(name, d)| {
            let (mean_drop, sd_drop) = mean_sd(&d);
            ImportanceRow {
                feature: name.clone(),
                mean_drop,
                sd_drop,
                n_draws: d.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FeatureTable {
        let mut t = FeatureTable {
            schema: vec!["signal".into(), "noise".into()],
            subject_ids: vec![],
            groups: vec![],
            rows: vec![],
        };
        for i in 0..16 {
            let g = if i % 2 == 0 { "C" } else { "D" };
            let shift = if g == "C" { -1.5 } else { 1.5 };
            t.subject_ids.push(format!("s{i:02}"));
            t.groups.push(g.into());
            t.rows.push(vec![shift + 0.5 * (i as f64 * 0.9).sin(), (i as f64 * 2.1).cos()]);
        }
        t
    }

    #[test]
    fn identity_permutation_has_no_drop() {
        let t = table();
        let cfg = LosoConfig::default();
        let folds = loso_folds(&t, &cfg, 3).unwrap();
        let id: Vec<usize> = (0..t.len()).collect();
        let a = permuted_auroc(&t, &folds, "C", 0, &id).unwrap();
        let b = permuted_auroc(&t, &folds, "C", 1, &id).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ablation_has_one_row_per_feature() {
        let t = table();
        let rows = ablate(&t, &LosoConfig::default(), &[1], 200).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].delta < -0.1, "{rows:?}");
        assert!(rows[0].significant);
        let imp = permutation_importance(&t, &LosoConfig::default(), &[1], 10).unwrap();
        assert!(imp[0].mean_drop > imp[1].mean_drop);
        assert_eq!(imp[0].n_draws, 10);
    }
}
