//! Benchmarks for the training loop live in `benches/`.
