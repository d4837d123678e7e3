//! Time-optimal control of omnidirectional robots with bounded acceleration.
//!
//! The optimal acceleration has constant magnitude `u_max` and points along a
//! line in adjoint space, `ψ(t) = (α₁t + α₃, α₂t + α₄)`. The trajectory it
//! produces has a closed form ([`trajectory`]), so the boundary-value problem
//! reduces to a five-parameter nonlinear least-squares fit ([`solver`]),
//! solved in two stages to avoid the local minima of the direct fit. The
//! [`controller`] wraps the solver in a re-solving closed loop, and
//! [`simulator`] and [`harness`] provide the noisy plant and the Monte Carlo
//! experiments.

pub mod controller;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod optimizer;
pub mod simulator;
pub mod solver;
pub mod trajectory;

pub use controller::{controller_tick, run_controller, shift_params, ControllerConfig, ControllerState};
pub use error::{Error, Result};
pub use geometry::{Problem, State, Vec2};
pub use solver::{solve, stage1, stage2, SolveResult, SolverConfig};
pub use trajectory::{cost_bv, eval_control, eval_state, t_upper_bound, ControlParams};
