//! Benchmarks for the opclass pipeline. Run with `cargo bench -p opclass-bench`.
