//! Criterion benchmarks for the dfnet kernels live in `benches/`.
