//! Criterion benchmarks for seqtrial-core live in `benches/`.
