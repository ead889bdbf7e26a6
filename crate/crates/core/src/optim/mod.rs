//! Box-constrained penalized maximum-likelihood fitting.

mod fit;
pub mod lbfgsb;

pub use fit::{
    fit, fit_all, fit_homogeneous, fit_subjects, fit_with_starts, multi_start_points, BoxBounds, FitOptions,
    FitReport, FitSet, StartHeuristic,
};
