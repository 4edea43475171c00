//! Criterion benchmarks for `riemdyn` live under `benches/`.
