//! Criterion benchmarks for `cploc-core`; see `benches/`.
