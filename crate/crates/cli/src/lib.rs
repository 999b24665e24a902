//! Configuration-driven experiments on top of `l1ppp`: single runs that write
//! a CSV trace and the solution, and `(μ, σ, solver)` sweeps.

pub mod config;
pub mod runner;

pub use config::{Config, ConfigError, SolverKind};
pub use runner::{build_instance, run, solve, sweep, CliError, Instance, Outcome, RunReport, SolverParams};
