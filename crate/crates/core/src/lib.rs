//! Lexicographic dividend equilibria for one-sided matching markets with endowments.
//!
//! The crate is organised around these modules:
//!
//! * [`economy`]: exact rational economies, replicas and perturbations.
//! * [`lp_kernel`]: exact simplex, welfare programs, VCG prices, vertex enumeration and
//!   Birkhoff–von Neumann decomposition.
//! * [`lde_model`]: lexicographic price systems and the equilibrium predicates.
//! * [`lde_solver`]: the perturbed fixed-point solver and tier decomposition.
//! * [`core_stability`]: Pareto, core, stability and rejective-core checks.
//! * [`hyperplane_certifier`]: price construction from rejective-core allocations.
//!
//! [`cli`] wires them into the `lexmarket` binary.

pub mod cli;
pub mod core_stability;
pub mod economy;
pub mod hyperplane_certifier;
pub mod io;
pub mod lde_model;
pub mod lde_solver;
pub mod lp_kernel;
pub mod rational;

pub use economy::{Allocation, Economy, EconomyError, Lottery};
pub use lde_model::LexPriceSystem;
pub use rational::Q;
