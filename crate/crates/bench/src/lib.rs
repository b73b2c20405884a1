//! Benchmarks for the numerical core; see `benches/`.
