//! Self-consistent solution of the DMFT system and predicted observables.

mod predict;
mod solve;

pub use predict::predict_observables;
pub use solve::{apply_map, solve, ConvergenceReport, Solution, SolveMode, SolveOptions, DEFAULT_TOL};
