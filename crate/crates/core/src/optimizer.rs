//! Damped least-squares minimizer for small, dense problems.
//!
//! Minimizes `½‖r(p)‖²` with a Levenberg-Marquardt iteration: the Jacobian
//! comes from central finite differences, the normal equations
//! `(JᵀJ + λ diag(JᵀJ)) δ = -Jᵀr` are solved by Cholesky factorization, and
//! `λ` is divided by ten after an accepted step and multiplied by ten after a
//! rejected one. Lower bounds are enforced by projecting each trial point.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the search.
    pub cost_tolerance: f64,
    /// Infinity norm of the gradient `Jᵀr` at which the search stops.
    pub gradient_tolerance: f64,
    /// Step length, relative to the parameter norm, at which the search stops.
    pub step_tolerance: f64,
    /// Finite-difference step relative to the parameter magnitude.
    pub fd_step: f64,
    pub initial_damping: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-12,
            step_tolerance: 1e-14,
            fd_step: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let tolerances = [
            ("cost_tolerance", self.cost_tolerance),
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("fd_step", self.fd_step),
            ("initial_damping", self.initial_damping),
        ];
        for (name, value) in tolerances {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIterations,
    /// Damping grew without bound: no descent step could be found.
    Stalled,
    /// The residual function failed at the starting point.
    EvaluationError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub final_params: Vec<f64>,
    /// `½‖r‖²` at `final_params`.
    pub final_cost: f64,
    /// Number of trial steps taken.
    pub iterations: usize,
    pub status: Status,
}

/// Absolute finite-difference step floor.
const FD_FLOOR: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e20;
const MIN_DAMPING: f64 = 1e-20;

/// Minimizes `½‖residuals(p)‖²` subject to `p ≥ lower_bounds`.
///
/// `residuals` returns `None` where it cannot be evaluated; such trial points
/// are rejected like any step that fails to decrease the cost. Use
/// `f64::NEG_INFINITY` for unbounded parameters.
pub fn minimize<F>(
    mut residuals: F,
    initial: &[f64],
    lower_bounds: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizerReport>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    config.validate()?;
    let n = initial.len();
    if lower_bounds.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} lower bounds for {n} parameters",
            lower_bounds.len()
        )));
    }
    if initial.iter().zip(lower_bounds).any(|(x, l)| !(x >= l) || !x.is_finite()) {
        return Err(Error::InvalidConfig("initial point violates bounds".into()));
    }

    let mut eval = |p: &[f64]| residuals(p).filter(|r| r.iter().all(|v| v.is_finite()));

    let mut x = initial.to_vec();
    let Some(mut r) = eval(&x) else {
        return Ok(OptimizerReport {
            final_params: x,
            final_cost: f64::INFINITY,
            iterations: 0,
            status: Status::EvaluationError,
        });
    };
    let mut cost = half_sq_norm(&r);
    let mut damping = config.initial_damping;
    let mut iterations = 0;
    let mut jac = jacobian(&mut eval, &x, &r, lower_bounds, config.fd_step);

    let status = loop {
        if cost == 0.0 {
            break Status::Converged;
        }
        let rv = DVector::from_column_slice(&r);
        let gradient = jac.tr_mul(&rv);
        if gradient.amax() <= config.gradient_tolerance {
            break Status::Converged;
        }
        if iterations >= config.max_iterations {
            break Status::MaxIterations;
        }

        let normal = jac.tr_mul(&jac);
        let diag_max = normal.diagonal().amax();
        let mut lhs = normal.clone();
        for i in 0..n {
            let d = normal[(i, i)].max(1e-12 * diag_max).max(f64::MIN_POSITIVE);
            lhs[(i, i)] += damping * d;
        }
        let Some(chol) = Cholesky::new(lhs) else {
            damping *= 10.0;
            if damping > MAX_DAMPING {
                break Status::Stalled;
            }
            continue;
        };
        let delta = chol.solve(&(-gradient));

        let trial: Vec<f64> = x
            .iter()
            .zip(delta.iter())
            .zip(lower_bounds)
            .map(|((xi, di), lo)| (xi + di).max(*lo))
            .collect();
        let step_norm = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm <= config.step_tolerance * (x_norm + config.step_tolerance) {
            break Status::Converged;
        }

        iterations += 1;
        match eval(&trial) {
            Some(r_trial) if half_sq_norm(&r_trial) < cost => {
                let new_cost = half_sq_norm(&r_trial);
                let decrease = (cost - new_cost) / cost;
                x = trial;
                r = r_trial;
                cost = new_cost;
                damping = (damping / 10.0).max(MIN_DAMPING);
                if decrease < config.cost_tolerance {
                    break Status::Converged;
                }
                jac = jacobian(&mut eval, &x, &r, lower_bounds, config.fd_step);
            }
            _ => {
                damping *= 10.0;
                if damping > MAX_DAMPING {
                    break Status::Stalled;
                }
            }
        }
    };

    Ok(OptimizerReport {
        final_params: x,
        final_cost: cost,
        iterations,
        status,
    })
}

fn half_sq_norm(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Central differences, falling back to one-sided differences at a bound or
/// where one side cannot be evaluated.
fn jacobian<F>(eval: &mut F, x: &[f64], r: &[f64], lower: &[f64], rel_step: f64) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let m = r.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = (rel_step * x[j].abs()).max(FD_FLOOR);
        probe[j] = x[j] + h;
        let plus = eval(&probe);
        let minus = if x[j] - h >= lower[j] {
            probe[j] = x[j] - h;
            eval(&probe)
        } else {
            None
        };
        probe[j] = x[j];

        let column: Option<Vec<f64>> = match (plus, minus) {
            (Some(p), Some(mm)) => Some(p.iter().zip(&mm).map(|(a, b)| (a - b) / (2.0 * h)).collect()),
            (Some(p), None) => Some(p.iter().zip(r).map(|(a, b)| (a - b) / h).collect()),
            (None, Some(mm)) => Some(r.iter().zip(&mm).map(|(a, b)| (a - b) / h).collect()),
            (None, None) => None,
        };
        if let Some(col) = column {
            if col.len() == m {
                for (i, v) in col.into_iter().enumerate() {
                    jac[(i, j)] = v;
                }
            }
        }
    }
    jac
}
