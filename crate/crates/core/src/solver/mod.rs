//! Self-contained solver for smooth convex programs.

pub mod banded;
pub mod ipm;
pub mod program;

pub use ipm::{solve, IpmOptions, KktSolution, SolveError};
pub use program::{Affine, HalfSquares, Inequality, LocalFn, Program, Quadratic, Term};
