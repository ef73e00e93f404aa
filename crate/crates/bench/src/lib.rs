//! Benchmarks for the alsieve kernels live under `benches/`.
