//! File formats, synthetic systems, derivative checks, optimization runs,
//! scaling benchmarks and paired optimizer studies.

pub mod bench;
pub mod checks;
pub mod io;
pub mod problem;
pub mod run;
pub mod stats;
pub mod study;
pub mod synth;

pub use bench::{bench_scaling, bench_system, BenchAlgorithm, BenchRecord, BenchTable};
pub use checks::{grad_check, hess_check, CheckReport};
pub use io::{OptimizerKind, RunConfig, SystemFile};
pub use problem::ControlProblem;
pub use run::{run_optimization, RunRecord};
pub use study::{study, write_trials_csv, StudySummary};
pub use synth::{generate_synthetic, initial_theta};
