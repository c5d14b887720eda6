//! Criterion benchmarks for the scsparc operators and decoder; see `benches/`.
