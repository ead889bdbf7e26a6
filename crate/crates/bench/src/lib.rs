//! Criterion benchmarks for the fitting and classification pipeline.
