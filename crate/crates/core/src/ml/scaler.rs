use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature z-scoring fitted on training rows only. Population standard
/// deviation; a constant feature maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "z-scoring needs at least 2 training rows, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged feature matrix".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd = (0..d)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| if self.sd[j] > 0.0 { (v - self.mean[j]) / self.sd[j] } else { 0.0 })
            .collect()
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, z)| self.mean[j] + z * self.sd[j]).collect()
    }
}

pub fn zscore_fit_transform(train: &[Vec<f64>]) -> Result<(StandardScaler, Vec<Vec<f64>>)> {
    let s = StandardScaler::fit(train)?;
    let t = s.transform_all(train);
    Ok((s, t))
}

pub fn zscore_apply(scaler: &StandardScaler, test: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scaler.transform_all(test)
}
