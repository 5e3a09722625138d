//! Benchmarks for the fosep kernels live in `benches/`.
