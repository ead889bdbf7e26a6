//! Subject-level classification over fitted parameters: feature assembly,
//! fold-wise z-scoring, an RBF-kernel SVM trained by SMO, leave-one-subject-out
//! evaluation, ablation and permutation importance.

pub mod eval;
pub mod features;
pub mod importance;
pub mod scaler;
pub mod svm;

pub use eval::{
    auroc, loso_evaluate, loso_folds, loso_seed, score_metrics, train_fold, ComparisonMetrics, EvalReport, FoldDecision,
    FoldModel, LosoConfig, MetricSummary, SeedResult, POOLED,
};
pub use features::{
    assemble_point_process_features, assemble_summary_features, build_feature_table, FeatureSet, FeatureTable,
    FeatureVector, LabeledSubject, POINT_PROCESS_SCHEMA, SUMMARY_SCHEMA,
};
pub use importance::{ablate, permutation_importance, permuted_auroc, AblationRow, ImportanceRow};
pub use scaler::{zscore_apply, zscore_fit_transform, StandardScaler};
pub use svm::{default_gamma, kernel_matrix, rbf, svm_decision, svm_train, Gamma, SvmConfig, SvmModel};
