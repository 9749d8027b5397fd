//! Criterion benchmarks for the simulator and trainer hot paths. See
//! `benches/hot_paths.rs`.
