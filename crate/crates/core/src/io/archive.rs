//! Fit archives (JSON) and run configuration (TOML).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::likelihood::RidgeConfig;
use crate::ml::{FeatureSet, LosoConfig, SvmConfig};
use crate::optim::{BoxBounds, FitOptions, FitSet};

/// Per-subject fits of all variants plus what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArchive {
    pub version: String,
    pub config: serde_json::Value,
    /// Input file name to hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Ordered by subject id.
    pub fits: Vec<FitSet>,
}

impl FitArchive {
    pub fn new(config: serde_json::Value, inputs: BTreeMap<String, String>, mut fits: Vec<FitSet>) -> Self {
        fits.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        Self {
            version: crate::VERSION.into(),
            config,
            inputs,
            fits,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                path: path.into(),
                line: j.line() as u64,
                msg: j.to_string(),
            },
            other => other,
        })
    }

    pub fn get(&self, subject_id: &str) -> Option<&FitSet> {
        self.fits
            .binary_search_by(|f| f.subject_id.as_str().cmp(subject_id))
            .ok()
            .map(|i| &self.fits[i])
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub events: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub tonic: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Settings shared by the command-line tools. Every field has a default, so
/// a config file only needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dt: f64,
    pub ridge: RidgeConfig,
    pub bounds: BoxBounds,
    pub n_starts: usize,
    pub max_iter: usize,
    /// Seeds of the repeated LOSO runs.
    pub seeds: Vec<u64>,
    pub featureset: FeatureSet,
    pub control: String,
    pub svm: SvmConfig,
    pub n_boot: usize,
    pub n_shuffles: usize,
    pub fdr_q: f64,
    pub duration: Option<f64>,
    pub subjects: Option<Vec<String>>,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            seed: 0,
            dt: fit.dt,
            ridge: fit.ridge,
            bounds: fit.bounds,
            n_starts: fit.n_starts,
            max_iter: fit.max_iter,
            seeds: (0..10).collect(),
            featureset: FeatureSet::PointProcess,
            control: "C".into(),
            svm: SvmConfig::default(),
            n_boot: 1000,
            n_shuffles: 20,
            fdr_q: 0.05,
            duration: None,
            subjects: None,
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            dt: self.dt,
            ridge: self.ridge,
            bounds: self.bounds,
            n_starts: self.n_starts,
            max_iter: self.max_iter,
            seed: self.seed,
        }
    }

    pub fn loso(&self) -> LosoConfig {
        LosoConfig {
            svm: self.svm,
            control: self.control.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit_options().validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return Err(Error::Config(format!("fdr_q must be in (0, 1), got {}", self.fdr_q)));
        }
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0) {
            return Err(Error::Config("svm.c and svm.tol must be > 0".into()));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("duration must be > 0, got {d}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::optim::FitReport;

    fn report(p: ModelParams) -> FitReport {
        FitReport {
            params: p,
            nll: 123.456_789_012_345_67,
            objective: 124.1 / 3.0,
            converged: true,
            iterations: 17,
            grad_inf_norm: 3.3e-7,
            n_restarts_used: 5,
            degenerate: false,
        }
    }

    #[test]
    fn archive_round_trip_is_lossless() {
        let full = ModelParams::full(0.051_234_567_890_123, 0.3 / 7.0, 0.8, 1.0 / 3.0, -0.5, 4.2);
        let set = FitSet {
            subject_id: "b".into(),
            homogeneous: report(full.restrict(crate::Variant::Homogeneous)),
            trial_modulated: report(full.restrict(crate::Variant::TrialModulated)),
            full: report(full),
        };
        let mut a_set = set.clone();
        a_set.subject_id = "a".into();
        let arch = FitArchive::new(serde_json::json!({"dt": 0.1}), BTreeMap::new(), vec![set, a_set]);
        assert_eq!(arch.fits[0].subject_id, "a");
        let back = FitArchive::from_json(&arch.to_json().unwrap()).unwrap();
        assert_eq!(back, arch);
        assert!(back.get("b").is_some() && back.get("c").is_none());
    }

    #[test]
    fn partial_config() {
        let c = RunConfig::from_toml("seed = 3\nfeatureset = \"combined\"\n[ridge]\nlambda_err = 2.0\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.featureset, FeatureSet::Combined);
        assert_eq!(c.ridge.lambda_err, 2.0);
        assert_eq!(c.ridge.lambda_neg, 1.0);
        assert!(RunConfig::from_toml("dt = -1.0").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let round = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(round, c);
    }
}
