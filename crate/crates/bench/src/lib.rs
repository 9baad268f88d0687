//! Criterion benchmarks for the irw-core solvers live in `benches/`.
