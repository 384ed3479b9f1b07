//! Criterion benchmarks for the privade core; see `benches/`.
