//! Criterion benchmarks for the corekit pipeline; see `benches/`.
