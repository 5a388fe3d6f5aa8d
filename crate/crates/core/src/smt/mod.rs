//! Solver back end: formula encoding, the solver process, interference.

pub mod encode;
mod interfere;
mod solver;

pub use interfere::{interference_formula, Interference};
pub use solver::{Model, SatResult, Solver, SolverConfig, SolverStats};
