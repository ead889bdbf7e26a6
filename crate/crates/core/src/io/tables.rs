//! Flat row types for the tabular outputs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gof::ModelComparison;
use crate::ml::{EvalReport, FeatureSet};
use crate::model::{intensity_binned, BinGrid, ModelParams, SubjectRecord, Variant};
use crate::simulate::CohortDataset;

/// Per-subject, per-variant fit quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub subject_id: String,
    pub variant: Variant,
    pub n_params: usize,
    pub n_events: usize,
    pub nll: f64,
    pub aic: f64,
    pub ks_d: f64,
    pub ks_threshold: f64,
    pub passes_ks: bool,
}

pub fn gof_rows(rows: &[ModelComparison]) -> Vec<GofRow> {
    rows.iter()
        .flat_map(|c| {
            c.reports.iter().map(|g| GofRow {
                subject_id: c.subject_id.clone(),
                variant: g.variant,
                n_params: g.n_params,
                n_events: g.n_events,
                nll: g.nll,
                aic: g.aic,
                ks_d: g.ks_d,
                ks_threshold: g.ks_threshold,
                passes_ks: g.passes_ks,
            })
        })
        .collect()
}

/// Classification summary: one row per comparison × metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub featureset: FeatureSet,
    pub comparison: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn eval_rows(featureset: FeatureSet, report: &EvalReport) -> Vec<EvalRow> {
    report
        .summary
        .iter()
        .map(|m| EvalRow {
            featureset,
            comparison: m.comparison.clone(),
            metric: m.metric.clone(),
            mean: m.mean,
            sd: m.sd,
            n: m.n,
        })
        .collect()
}

/// Held-out decision of one subject under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub featureset: FeatureSet,
    pub seed: u64,
    pub subject_id: String,
    pub group: String,
    pub label: i8,
    pub score: f64,
    pub predicted: i8,
    pub kkt_residual: f64,
}

pub fn fold_rows(featureset: FeatureSet, report: &EvalReport) -> Vec<FoldRow> {
    report
        .seeds
        .iter()
        .flat_map(|s| {
            s.folds.iter().map(move |f| FoldRow {
                featureset,
                seed: s.seed,
                subject_id: f.subject_id.clone(),
                group: f.group.clone(),
                label: if f.label > 0.0 { 1 } else { -1 },
                score: f.score,
                predicted: if f.score > 0.0 { 1 } else { -1 },
                kkt_residual: f.kkt_residual,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityRow {
    pub subject_id: String,
    pub variant: Variant,
    pub t_s: f64,
    pub intensity: f64,
}

/// `λ(t)` at the bin centers of a `dt` grid over the subject's session.
pub fn intensity_rows(subject: &SubjectRecord, params: &ModelParams, dt: f64) -> Result<Vec<IntensityRow>> {
    let grid = BinGrid::new(dt, subject.events.duration())?;
    let lam = intensity_binned(params, &subject.trials, &grid);
    Ok(grid
        .centers()
        .into_iter()
        .zip(lam)
        .map(|(t_s, intensity)| IntensityRow {
            subject_id: subject.subject_id.clone(),
            variant: params.variant,
            t_s,
            intensity,
        })
        .collect())
}

/// Ground-truth parameters of a simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub subject_id: String,
    pub group: String,
    pub variant: Variant,
    pub mu: f64,
    pub a0: f64,
    pub w_neg: f64,
    pub w_rt: f64,
    pub w_err: f64,
    pub tau: f64,
}

pub fn truth_rows(cohort: &CohortDataset) -> Vec<TruthRow> {
    cohort
        .subjects
        .iter()
        .filter_map(|s| {
            let p = s.truth?;
            Some(TruthRow {
                subject_id: s.record.subject_id.clone(),
                group: s.group.clone(),
                variant: p.variant,
                mu: p.mu,
                a0: p.a0,
                w_neg: p.w_neg,
                w_rt: p.w_rt,
                w_err: p.w_err,
                tau: p.tau,
            })
        })
        .collect()
}
