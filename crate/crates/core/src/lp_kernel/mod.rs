//! Linear programming kernel: a generic simplex, assignment programs and VCG prices,
//! polytope vertices, and Birkhoff-von Neumann decomposition.

pub mod assignment;
pub mod bvn;
pub mod scalar;
pub mod simplex;
pub mod vertices;

pub use assignment::{
    max_linear_over, max_welfare, max_welfare_assignment, vcg_prices, vcg_prices_generic,
    weighted_utilities, WelfareSolution,
};
pub use bvn::{bvn_decompose, decompose_allocation, reconstruct, BvnError, BvnTerm};
pub use scalar::Scalar;
pub use simplex::{
    check_farkas, check_primal, check_ray, recheck_optimal, solve_lp, Direction, LinearProgram,
    LpError, LpSolution, LpStatus, Sense,
};
pub use vertices::{enumerate_vertices, preferred_vertices, restricted_vertices, VertexError};
