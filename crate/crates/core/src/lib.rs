//! Covariate-modulated Poisson point-process models for event trains recorded
//! during trial-based tasks.
//!
//! The crate covers the whole pipeline: evaluating the conditional intensity
//! of a trial-locked exponential-kernel model, fitting it per subject by
//! box-constrained penalized maximum likelihood, checking the fits (AIC,
//! Kolmogorov-Smirnov), simulating ground-truth cohorts, group statistics,
//! and a leave-one-subject-out RBF-SVM classifier over the fitted parameters.

pub mod error;
pub mod gof;
pub mod io;
pub mod likelihood;
pub mod ml;
pub mod model;
pub mod optim;
pub mod seed;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{BinnedCounts, RidgeConfig};
pub use model::{
    EventTrain, ModelParams, RawTrial, SubjectRecord, SummaryAnnotations, TrialCovariates,
    Variant,
};
pub use optim::{BoxBounds, FitOptions, FitReport, FitSet};
pub use simulate::{CohortDataset, CohortSpec, CohortSubject, TrialScheduleConfig};

/// Toolkit version recorded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
