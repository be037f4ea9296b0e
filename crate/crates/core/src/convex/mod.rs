//! Small dense convex solver used by both SCA subproblems.
//!
//! Programs maximize a sum of concave terms (weighted `ln(1 + affine)`,
//! affine, negative sums of squares) subject to convex quadratic, affine,
//! box, equality and second-order cone constraints over real variables.

mod barrier;
pub mod embed;
mod program;

pub use barrier::{barrier_eval, solve, solve_with, BarrierEval, SolveOutcome, SolveStatus, SolverSettings};
pub use embed::{embed_complex, lift_real, ComplexAffine};
pub use program::{Constraint, ConvexProgram, LinearForm, ObjectiveTerm, QuadraticForm};
