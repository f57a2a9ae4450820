//! Criterion benchmarks for `emodiff-core`; see `benches/core.rs`.
