//! Benchmarks for the sweep solver live in `benches/`.
