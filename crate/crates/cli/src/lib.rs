//! Seeded experiment runner around `ice-core`: task files, suites, the
//! ablation ladder, sweeps and trace statistics. Every output is a pure
//! function of the config, its seed and the task list.

pub mod config;
pub mod experiments;
pub mod stats;
pub mod suite;
pub mod tasks;

pub use config::ExperimentConfig;
pub use experiments::{run_ablation_ladder, sweep, LadderReport, SweepAxis, SweepPoint, SweepReport};
pub use suite::{extract_answer, run_suite, run_suite_rung, Aggregate, RunSummary, SuiteReport};
pub use tasks::{gen_tasks, parse_tasks, read_tasks, task_seed, write_tasks};
