//! Criterion benchmarks for nvc-core live in `benches/`.
