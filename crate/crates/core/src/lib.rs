//! Coverage-weighted test case generation.
//!
//! The pipeline probes a system under test with a one-factor-change suite
//! ([`schedule`]), turns per-case line coverage into per-parameter impact
//! weights ([`coverage`]), and generates weighted, constraint-satisfying
//! suites ([`generator`]). [`harness`] executes suites against the SUT and
//! pre-built mutants to measure fault detection.

pub mod constraints;
pub mod coverage;
pub mod generator;
pub mod harness;
pub mod model;
pub mod schedule;
pub mod seed;
pub mod suitefile;

pub use constraints::{evaluate, is_satisfiable, parse_constraint, Formula, SatOutcome};
pub use model::{parse_model, ParamKind, Parameter, TestCase, TestModel};
