//! Criterion benchmarks (`benches/`) and the end-to-end acceptance suite
//! (`tests/acceptance.rs`) for the fitting and testing pipelines.
