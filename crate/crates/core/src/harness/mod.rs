//! Experiment drivers behind the command-line tool and the acceptance tests.

pub mod attacks;
pub mod bench;
pub mod fairness;
pub mod report;
pub mod scenario;

pub use attacks::{run_attacks, Attack, AttackReport};
pub use bench::{bench_puzzle, BenchReport};
pub use fairness::{run_fairness, FairnessReport};
pub use report::{emit_report, write_report, Format, Report};
pub use scenario::{run_scenario, ScenarioReport};
