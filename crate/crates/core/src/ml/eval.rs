//! Leave-one-subject-out evaluation and ROC metrics.
//!
//! Seed semantics: each seed shuffles the order in which training rows reach
//! the solver (fold `i` uses the stream `derive(seed, i)`). The solver itself
//! is deterministic, so the spread across seeds only reflects tie-breaking in
//! working-set selection and may well be zero.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureTable;
use super::scaler::StandardScaler;
use super::svm::{svm_decision, svm_train, SvmConfig, SvmModel};
use crate::error::{Error, Result};
use crate::gof::mean_sd;
use crate::seed;
use crate::stats::midranks;

/// Probability that a random positive outscores a random negative, with
/// ties counted as one half. `labels` are `+1` / `-1`.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUROC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score".into()));
    }
    let (ranks, _) = midranks(scores);
    let r_pos: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l > 0.0).map(|(r, _)| r).sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((r_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoConfig {
    pub svm: SvmConfig,
    /// Group label of the negative class; every other group is positive.
    pub control: String,
}

impl Default for LosoConfig {
    fn default() -> Self {
        Self {
            svm: SvmConfig::default(),
            control: "C".into(),
        }
    }
}

/// Scaler and SVM trained without one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub held_out: usize,
    pub scaler: StandardScaler,
    pub model: SvmModel,
}

impl FoldModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        svm_decision(&self.model, &self.scaler.transform(row))
    }
}

/// Trains on `order` (indices into the table), which must not contain
/// the held-out row.
pub fn train_fold(
    table: &FeatureTable,
    labels: &[f64],
    held_out: usize,
    order: &[usize],
    cfg: &SvmConfig,
) -> Result<FoldModel> {
    debug_assert!(!order.contains(&held_out));
    let raw: Vec<Vec<f64>> = order.iter().map(|&i| table.rows[i].clone()).collect();
    let y: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
    let scaler = StandardScaler::fit(&raw)?;
    let x = scaler.transform_all(&raw);
    let model = svm_train(&x, &y, cfg)?;
    Ok(FoldModel {
        held_out,
        scaler,
        model,
    })
}

fn check_table(table: &FeatureTable, control: &str) -> Result<Vec<f64>> {
    let labels = table.labels(control);
    let n_neg = labels.iter().filter(|&&l| l < 0.0).count();
    let n_pos = labels.len() - n_neg;
    if n_neg < 2 || n_pos < 2 {
        return Err(Error::Evaluation(format!(
            "LOSO needs at least 2 subjects per class, got {n_neg} control ('{control}') and {n_pos} other"
        )));
    }
    if table.schema.is_empty() {
        return Err(Error::Evaluation("feature table has no columns".into()));
    }
    Ok(labels)
}

/// One fold model per subject, in table order.
pub fn loso_folds(table: &FeatureTable, cfg: &LosoConfig, seed: u64) -> Result<Vec<FoldModel>> {
    let labels = check_table(table, &cfg.control)?;
    (0..table.len())
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<usize> = (0..table.len()).filter(|&j| j != i).collect();
            order.shuffle(&mut seed::rng(seed::derive(seed, i as u64)));
            train_fold(table, &labels, i, &order, &cfg.svm)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDecision {
    pub subject_id: String,
    pub group: String,
    pub label: f64,
    pub score: f64,
    pub kkt_residual: f64,
}

/// Metrics restricted to the control group plus a set of positive groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    pub comparison: String,
    pub auroc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Pooled comparison first, then one per positive group.
    pub comparisons: Vec<ComparisonMetrics>,
    pub max_kkt_residual: f64,
    pub folds: Vec<FoldDecision>,
}

impl SeedResult {
    pub fn pooled(&self) -> &ComparisonMetrics {
        &self.comparisons[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub comparison: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub control: String,
    pub schema: Vec<String>,
    pub seeds: Vec<SeedResult>,
    /// Mean and sample sd across seeds of every comparison × metric.
    pub summary: Vec<MetricSummary>,
}

impl EvalReport {
    pub fn metric(&self, comparison: &str, metric: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.comparison == comparison && m.metric == metric)
    }

    /// Mean pooled AUROC across seeds.
    pub fn mean_auroc(&self) -> f64 {
        self.metric(POOLED, "auroc").map_or(f64::NAN, |m| m.mean)
    }

    pub fn max_kkt_residual(&self) -> f64 {
        self.seeds.iter().map(|s| s.max_kkt_residual).fold(0.0, f64::max)
    }
}

/// Name of the control-vs-all-others comparison.
pub const POOLED: &str = "vs_all";

fn comparison(name: String, scores: &[f64], labels: &[f64]) -> Result<ComparisonMetrics> {
    let n_positive = labels.iter().filter(|&&l| l > 0.0).count();
    let n_negative = labels.len() - n_positive;
    let tp = scores.iter().zip(labels).filter(|(&s, &l)| l > 0.0 && s > 0.0).count();
    let tn = scores.iter().zip(labels).filter(|(&s, &l)| l < 0.0 && s <= 0.0).count();
    Ok(ComparisonMetrics {
        comparison: name,
        auroc: auroc(scores, labels)?,
        sensitivity: tp as f64 / n_positive as f64,
        specificity: tn as f64 / n_negative as f64,
        n_positive,
        n_negative,
    })
}

/// Pooled and per-group metrics from held-out scores. Group breakdowns reuse
/// the pooled-model scores of the control subjects and of that group only.
pub fn score_metrics(table: &FeatureTable, scores: &[f64], control: &str) -> Result<Vec<ComparisonMetrics>> {
    let labels = table.labels(control);
    let mut out = vec![comparison(POOLED.into(), scores, &labels)?];
    let mut positive: Vec<&str> = table.groups.iter().map(String::as_str).filter(|g| *g != control).collect();
    positive.sort_unstable();
    positive.dedup();
    if positive.len() > 1 {
        for g in positive {
            let idx: Vec<usize> = (0..table.len())
                .filter(|&i| table.groups[i] == control || table.groups[i] == g)
                .collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<f64> = idx.iter().map(|&i| labels[i]).collect();
            out.push(comparison(format!("vs_{g}"), &s, &l)?);
        }
    }
    Ok(out)
}

pub fn loso_seed(table: &FeatureTable, cfg: &LosoConfig, seed: u64) -> Result<SeedResult> {
    let folds = loso_folds(table, cfg, seed)?;
    let labels = table.labels(&cfg.control);
    let scores: Vec<f64> = folds.iter().map(|f| f.score(&table.rows[f.held_out])).collect();
    let comparisons = score_metrics(table, &scores, &cfg.control)?;
    let decisions: Vec<FoldDecision> = folds
        .iter()
        .map(|f| FoldDecision {
            subject_id: table.subject_ids[f.held_out].clone(),
            group: table.groups[f.held_out].clone(),
            label: labels[f.held_out],
            score: scores[f.held_out],
            kkt_residual: f.model.kkt_residual,
        })
        .collect();
    Ok(SeedResult {
        seed,
        comparisons,
        max_kkt_residual: decisions.iter().map(|d| d.kkt_residual).fold(0.0, f64::max),
        folds: decisions,
    })
}

pub fn loso_evaluate(table: &FeatureTable, cfg: &LosoConfig, seeds: &[u64]) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::Evaluation("at least one seed is required".into()));
    }
    let results = seeds
        .iter()
        .map(|&s| loso_seed(table, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    for (k, c) in results[0].comparisons.iter().enumerate() {
        for metric in ["auroc", "sensitivity", "specificity"] {
            let v: Vec<f64> = results
                .iter()
                .map(|r| {
                    let m = &r.comparisons[k];
                    match metric {
                        "auroc" => m.auroc,
                        "sensitivity" => m.sensitivity,
                        _ => m.specificity,
                    }
                })
                .collect();
            let (mean, sd) = mean_sd(&v);
            summary.push(MetricSummary {
                comparison: c.comparison.clone(),
                metric: metric.into(),
                mean,
                sd,
                n: v.len(),
            });
        }
    }
    Ok(EvalReport {
        control: cfg.control.clone(),
        schema: table.schema.clone(),
        seeds: results,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1, 0.2], &[1.0, 1.0, -1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 4], &[1.0, -1.0, 1.0, -1.0]).unwrap(), 0.5);
        let s = [0.3, -0.2, 0.9, 0.1, 0.4];
        let l = [1.0, -1.0, -1.0, 1.0, 1.0];
        let a = auroc(&s, &l).unwrap();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_relative_eq!(auroc(&neg, &l).unwrap(), 1.0 - a, epsilon = 1e-15);
        assert!(matches!(auroc(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::Undefined(_))));
    }

    fn toy_table() -> FeatureTable {
        let mut t = FeatureTable {
            schema: vec!["a".into(), "b".into()],
            subject_ids: vec![],
            groups: vec![],
            rows: vec![],
        };
        for i in 0..12 {
            let g = ["C", "D", "S"][i % 3];
            let shift = if g == "C" { 0.0 } else { 3.0 };
            t.subject_ids.push(format!("s{i:02}"));
            t.groups.push(g.into());
            t.rows.push(vec![shift + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]);
        }
        t
    }

    #[test]
    fn separable_toy_report() {
        let r = loso_evaluate(&toy_table(), &LosoConfig::default(), &[1, 2]).unwrap();
        assert_eq!(r.seeds[0].comparisons.len(), 3);
        assert_eq!(r.seeds[0].comparisons[1].comparison, "vs_D");
        assert!(r.mean_auroc() > 0.9, "{}", r.mean_auroc());
        assert!(r.max_kkt_residual() < 1e-3);
        for m in &r.summary {
            assert!((0.0..=1.0).contains(&m.mean), "{m:?}");
        }
    }

    #[test]
    fn degenerate_cohort_rejected() {
        let mut t = toy_table();
        for g in &mut t.groups {
            if g == "C" {
                *g = "D".into();
            }
        }
        assert!(matches!(loso_evaluate(&t, &LosoConfig::default(), &[0]), Err(Error::Evaluation(_))));
    }
}
