//! Linear programming engine used by every duality computation in `cot-lab`.
//!
//! Programs are stated in natural form ([`LinearProgram`]): rows with `≤`, `=`
//! or `≥` relations and per-variable intervals. [`solve`] returns a
//! [`LpSolution`] whose status is always backed by a witness: an optimal
//! vertex with row multipliers, a Farkas certificate, or an improving ray.
//! [`verify`] recomputes every residual from the program alone.

// dense tables read most clearly with explicit indices
#![allow(clippy::needless_range_loop)]

mod error;
mod problem;
mod simplex;
mod verify;

pub use error::{LpError, PivotRecord};
pub use problem::{
    Bounds, Certificate, LinearProgram, LpSolution, Relation, Residuals, Row, Sense, Status,
};
pub use simplex::{solve, solve_with, SolverOptions};
pub use verify::{check_ray, farkas_margin, optimality_residuals, verify, RayCheck, ResidualReport};

/// Scaled residual tolerance an optimal solution must meet.
pub const RESIDUAL_TOL: f64 = 1e-9;
