//! Boundary-value and iterative costs, and the residual vectors the
//! least-squares solver minimizes.

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::Result;
use crate::geometry::Problem;

use super::closed_form::eval_state;
use super::params::ControlParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTerms {
    /// `‖X^F - X(T)‖²`
    pub pos_err_sq: f64,
    /// `‖V^F - V(T)‖²`, before weighting.
    pub vel_err_sq: f64,
    /// Weight applied to `vel_err_sq` in `total` (1 for the boundary-value cost).
    pub vel_weight: f64,
    pub time_penalty: f64,
    pub total: f64,
}

/// Boundary-value miss `[X^F - X(T), V^F - V(T)]`.
pub fn bv_residuals(params: &ControlParams, problem: &Problem) -> Result<[f64; 4]> {
    let end = eval_state(params, &problem.initial, problem.u_max, params.duration)?;
    let dx = problem.goal.pos - end.pos;
    let dv = problem.goal.vel - end.vel;
    Ok([dx.x, dx.y, dv.x, dv.y])
}

/// `F_BV = ‖X^F - X(T)‖² + ‖V^F - V(T)‖²`.
pub fn cost_bv(params: &ControlParams, problem: &Problem) -> Result<CostTerms> {
    let r = bv_residuals(params, problem)?;
    let pos_err_sq = r[0] * r[0] + r[1] * r[1];
    let vel_err_sq = r[2] * r[2] + r[3] * r[3];
    Ok(CostTerms {
        pos_err_sq,
        vel_err_sq,
        vel_weight: 1.0,
        time_penalty: 0.0,
        total: pos_err_sq + vel_err_sq,
    })
}

/// Velocity-error discount `β = max(1 - ‖V^F - V^I‖/(u_max T_e), β_min)`,
/// clamped to `[β_min, 1]`.
pub fn velocity_weight(problem: &Problem, expected_time: f64, beta_min: f64) -> f64 {
    let dv = (problem.goal.vel - problem.initial.vel).norm();
    let beta = 1.0 - dv / (problem.u_max * expected_time);
    if beta.is_nan() {
        return beta_min;
    }
    beta.clamp(beta_min, 1.0)
}

/// `k₁ exp(k₂ (T/T_e - τ))`.
pub fn time_penalty(duration: f64, expected_time: f64, cfg: &ControllerConfig) -> f64 {
    cfg.k1 * (cfg.k2 * (duration / expected_time - cfg.tau)).exp()
}

/// Residuals whose squared norm is `F_it`: the position miss, the velocity
/// miss scaled by `√β`, and the square root of the time penalty.
pub fn iterative_residuals(
    params: &ControlParams,
    problem: &Problem,
    expected_time: f64,
    cfg: &ControllerConfig,
) -> Result<[f64; 5]> {
    let [px, py, vx, vy] = bv_residuals(params, problem)?;
    let w = velocity_weight(problem, expected_time, cfg.beta_min).sqrt();
    let penalty = time_penalty(params.duration, expected_time, cfg).sqrt();
    Ok([px, py, w * vx, w * vy, penalty])
}

/// `F_it = ‖X^F - X(T)‖² + β‖V^F - V(T)‖² + k₁ exp(k₂ (T/T_e - τ))`, with
/// `V^I` taken from `problem.initial` (the current observation).
pub fn cost_iterative(
    params: &ControlParams,
    problem: &Problem,
    expected_time: f64,
    cfg: &ControllerConfig,
) -> Result<CostTerms> {
    let bv = cost_bv(params, problem)?;
    let vel_weight = velocity_weight(problem, expected_time, cfg.beta_min);
    let penalty = time_penalty(params.duration, expected_time, cfg);
    Ok(CostTerms {
        vel_weight,
        time_penalty: penalty,
        total: bv.pos_err_sq + vel_weight * bv.vel_err_sq + penalty,
        ..bv
    })
}
