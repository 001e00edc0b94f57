//! Benchmark harness for `rnsckks`: per-primitive sweeps, bootstrapping
//! reports, an encrypted logistic-regression demo and golden test vectors.

pub mod boot;
pub mod lr;
pub mod micro;
pub mod presets;
pub mod report;
pub mod stats;
pub mod vectors;

pub use boot::{run_bootstrap_report, BootstrapReport};
pub use lr::{run_lr_demo, LrConfig, LrReport};
pub use micro::{run_microbench, BenchOptions, BenchResult, Op, Sweep};
pub use vectors::{dump_test_vectors, replay};
