//! Criterion benchmarks for the curricula pipeline live in `benches/`.
