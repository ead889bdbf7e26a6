//! Subject-level feature vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventTrain, SubjectRecord, SummaryAnnotations, Variant};
use crate::optim::{FitReport, FitSet};

/// Fitted FULL parameters followed by the event count.
pub const POINT_PROCESS_SCHEMA: [&str; 7] = ["mu", "a0", "w_neg", "w_rt", "w_err", "tau", "n_events"];

/// Summary statistics of the tonic level and of SCR amplitudes/rise times.
pub const SUMMARY_SCHEMA: [&str; 7] = [
    "tonic_mean",
    "tonic_var",
    "tonic_slope",
    "amp_mean",
    "amp_var",
    "rise_mean",
    "rise_var",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "pp", alias = "point_process")]
    PointProcess,
    #[serde(rename = "scr", alias = "scr_baseline")]
    ScrBaseline,
    #[serde(rename = "combined")]
    Combined,
}

impl FeatureSet {
    pub fn schema(self) -> Vec<String> {
        let names: Vec<&str> = match self {
            FeatureSet::PointProcess => POINT_PROCESS_SCHEMA.to_vec(),
            FeatureSet::ScrBaseline => SUMMARY_SCHEMA.to_vec(),
            FeatureSet::Combined => POINT_PROCESS_SCHEMA.iter().chain(&SUMMARY_SCHEMA).copied().collect(),
        };
        names.into_iter().map(String::from).collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::PointProcess => "pp",
            FeatureSet::ScrBaseline => "scr",
            FeatureSet::Combined => "combined",
        }
    }

    fn needs_annotations(self) -> bool {
        self != FeatureSet::PointProcess
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pp" | "point_process" => Ok(FeatureSet::PointProcess),
            "scr" | "scr_baseline" => Ok(FeatureSet::ScrBaseline),
            "combined" => Ok(FeatureSet::Combined),
            _ => Err(Error::InvalidInput(format!("unknown feature set '{s}' (pp|scr|combined)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub subject_id: String,
    pub values: Vec<f64>,
    pub schema: Vec<String>,
}

/// Raw (unscaled) `[μ, A₀, w_neg, w_rt, w_err, τ, n_events]`.
pub fn assemble_point_process_features(
    subject_id: &str,
    fit: &FitReport,
    events: &EventTrain,
) -> Result<FeatureVector> {
    if fit.params.variant != Variant::Full {
        return Err(Error::InvalidInput(format!(
            "point-process features need a FULL fit, got {}",
            fit.params.variant
        )));
    }
    let mut values = fit.params.to_array().to_vec();
    values.push(events.len() as f64);
    Ok(FeatureVector {
        subject_id: subject_id.into(),
        values,
        schema: FeatureSet::PointProcess.schema(),
    })
}

fn mean_pvar(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

/// Tonic mean, population variance and least-squares slope (per second);
/// amplitude mean and variance; rise-time mean and variance.
pub fn assemble_summary_features(subject_id: &str, annotations: Option<&SummaryAnnotations>) -> Result<FeatureVector> {
    let ann = annotations
        .ok_or_else(|| Error::FeatureUnavailable(format!("subject {subject_id}: no summary annotations")))?;
    if ann.tonic_samples.len() < 2 {
        return Err(Error::FeatureUnavailable(format!(
            "subject {subject_id}: need at least 2 tonic samples, got {}",
            ann.tonic_samples.len()
        )));
    }
    if ann.scr_amplitudes.is_empty() || ann.scr_rise_times_s.is_empty() {
        return Err(Error::FeatureUnavailable(format!(
            "subject {subject_id}: no SCR amplitude/rise-time annotations"
        )));
    }
    let times: Vec<f64> = ann.tonic_samples.iter().map(|s| s.0).collect();
    let level: Vec<f64> = ann.tonic_samples.iter().map(|s| s.1).collect();
    let (tm, tv) = mean_pvar(&times);
    let (lm, lv) = mean_pvar(&level);
    let cov = times.iter().zip(&level).map(|(t, l)| (t - tm) * (l - lm)).sum::<f64>() / times.len() as f64;
    let slope = if tv > 0.0 { cov / tv } else { 0.0 };
    let (am, av) = mean_pvar(&ann.scr_amplitudes);
    let (rm, rv) = mean_pvar(&ann.scr_rise_times_s);
    Ok(FeatureVector {
        subject_id: subject_id.into(),
        values: vec![lm, lv, slope, am, av, rm, rv],
        schema: FeatureSet::ScrBaseline.schema(),
    })
}

/// Labeled subjects × features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub schema: Vec<String>,
    pub subject_ids: Vec<String>,
    pub groups: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `-1` for the control group, `+1` for everything else.
    pub fn labels(&self, control: &str) -> Vec<f64> {
        self.groups.iter().map(|g| if g == control { -1.0 } else { 1.0 }).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s == name)
    }

    pub fn without_feature(&self, name: &str) -> Result<FeatureTable> {
        let j = self
            .feature_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("no feature named '{name}'")))?;
        let mut t = self.clone();
        t.schema.remove(j);
        for r in &mut t.rows {
            r.remove(j);
        }
        Ok(t)
    }

    /// Keeps only the rows whose group is in `keep`.
    pub fn subset_groups(&self, keep: &[&str]) -> FeatureTable {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(&self.groups[i].as_str())).collect();
        FeatureTable {
            schema: self.schema.clone(),
            subject_ids: idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// A subject's record, fits and group label.
pub struct LabeledSubject<'a> {
    pub record: &'a SubjectRecord,
    pub fits: &'a FitSet,
    pub group: &'a str,
}

/// Builds the feature table. Subjects without the annotations a summary
/// feature set needs are skipped with a warning; it is an error if none remain.
pub fn build_feature_table(subjects: &[LabeledSubject<'_>], featureset: FeatureSet) -> Result<FeatureTable> {
    let mut table = FeatureTable {
        schema: featureset.schema(),
        subject_ids: Vec::new(),
        groups: Vec::new(),
        rows: Vec::new(),
    };
    for s in subjects {
        let id = s.record.subject_id.as_str();
        let mut row = Vec::with_capacity(table.schema.len());
        if featureset != FeatureSet::ScrBaseline {
            row.extend(assemble_point_process_features(id, &s.fits.full, &s.record.events)?.values);
        }
        if featureset.needs_annotations() {
            match assemble_summary_features(id, s.record.annotations.as_ref()) {
                Ok(v) => row.extend(v.values),
                Err(Error::FeatureUnavailable(msg)) => {
                    log::warn!("excluded from the {featureset} feature set: {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("subject {id}: non-finite feature value")));
        }
        table.subject_ids.push(id.to_string());
        table.groups.push(s.group.to_string());
        table.rows.push(row);
    }
    if table.is_empty() {
        return Err(Error::FeatureUnavailable(format!(
            "no subject has the inputs required by the {featureset} feature set"
        )));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use approx::assert_relative_eq;

    fn report(p: ModelParams) -> FitReport {
        FitReport {
            params: p,
            nll: 0.0,
            objective: 0.0,
            converged: true,
            iterations: 1,
            grad_inf_norm: 0.0,
            n_restarts_used: 1,
            degenerate: false,
        }
    }

    #[test]
    fn point_process_vector_is_theta_and_count() {
        let p = ModelParams::full(0.05, 0.3, 0.8, 0.3, -0.5, 4.0);
        let e = EventTrain::new(vec![1.0, 2.0, 3.0], 10.0).unwrap();
        let v = assemble_point_process_features("s", &report(p), &e).unwrap();
        assert_eq!(v.values, vec![0.05, 0.3, 0.8, 0.3, -0.5, 4.0, 3.0]);
        assert_eq!(v.schema, POINT_PROCESS_SCHEMA.to_vec());
        assert!(assemble_point_process_features("s", &report(p.restrict(Variant::TrialModulated)), &e).is_err());
    }

    #[test]
    fn summary_examples() {
        let ann = SummaryAnnotations {
            tonic_samples: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)],
            scr_amplitudes: vec![1.0, 2.0, 3.0],
            scr_rise_times_s: vec![1.0, 1.0, 1.0],
        };
        let v = assemble_summary_features("s", Some(&ann)).unwrap().values;
        assert_relative_eq!(v[2], 1.0, epsilon = 1e-12);
        assert_relative_eq!(v[3], 2.0);
        assert_relative_eq!(v[4], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(v[6], 0.0);

        let flat = SummaryAnnotations {
            tonic_samples: vec![(0.0, 4.0), (1.0, 4.0), (2.0, 4.0)],
            ..ann.clone()
        };
        let v = assemble_summary_features("s", Some(&flat)).unwrap().values;
        assert_eq!((v[1], v[2]), (0.0, 0.0));

        assert!(matches!(assemble_summary_features("s", None), Err(Error::FeatureUnavailable(_))));
    }

    #[test]
    fn combined_schema_concatenates() {
        let s = FeatureSet::Combined.schema();
        assert_eq!(s.len(), 14);
        assert_eq!(s[6], "n_events");
        assert_eq!(s[7], "tonic_mean");
    }
}
