//! Criterion benchmarks for the STab engine.
