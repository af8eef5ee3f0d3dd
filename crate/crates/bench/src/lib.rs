//! Criterion benchmarks for `hilsim-core`; run with `cargo bench -p hilsim-bench`.
