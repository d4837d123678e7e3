//! Closed-form evaluation of time-optimal trajectories.
//!
//! Everything here is a pure function of its arguments.

mod bang_bang;
mod bounds;
mod closed_form;
mod cost;
mod params;

pub use bang_bang::{bang_bang_1d, BangBang1d};
pub use bounds::{initial_guess, middle_segment, projection_axis, t_upper_bound, GUESS_TILT};
pub use closed_form::{eval_adjoint, eval_control, eval_state};
pub use cost::{
    bv_residuals, cost_bv, cost_iterative, iterative_residuals, time_penalty, velocity_weight, CostTerms,
};
pub use params::ControlParams;
