//! Numerical kernels shared by every layer of the simulation.
//!
//! Everything here is a pure function of its inputs.

mod gamma;
mod pinv;
mod qcqp;
mod quintic;
mod riccati;

pub use gamma::{chi2_cdf, chi2_quantile, reg_lower_gamma};
pub use pinv::{pinv, pinv_with_condition, DEFAULT_RANK_TOL};
pub use qcqp::{solve_qcqp, QcqpProblem, QcqpSolution};
pub use quintic::{quintic_plan, TrajectoryPoint};
pub use riccati::{solve_dare, solve_dare_with, DareOptions, DareSolution};
