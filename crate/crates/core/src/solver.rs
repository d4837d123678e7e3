//! The two-stage solver.
//!
//! Stage 1 holds the horizon at the analytic upper bound and fits the
//! adjoint line; the horizon-constrained fit usually cannot hit the goal but
//! lands in the basin of the true optimum. Stage 2 starts from there and
//! frees the horizon.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::geometry::Problem;
use crate::optimizer::{minimize, OptimizerConfig, Status};
use crate::trajectory::{bv_residuals, cost_bv, initial_guess, iterative_residuals, t_upper_bound, ControlParams};

/// Adjoint used when the projected initial guess is disabled.
pub const FIXED_ALPHA_GUESS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
/// Stage-1 horizon used when the upper bound is disabled.
pub const FIXED_HORIZON_GUESS: f64 = 1.0;
/// Horizons at or below this are treated as "no motion".
pub const MIN_HORIZON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// A solve succeeds when the final `F_BV` is below this value.
    pub success_cost_threshold: f64,
    pub optimizer: OptimizerConfig,
    pub use_t_max: bool,
    pub use_initial_guess: bool,
    pub use_stage1: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            success_cost_threshold: 1e-5,
            optimizer: OptimizerConfig::default(),
            use_t_max: true,
            use_initial_guess: true,
            use_stage1: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_cost_threshold > 0.0) {
            return Err(Error::InvalidConfig("success_cost_threshold must be positive".into()));
        }
        self.optimizer.validate()
    }

    /// The five ablation rows, from least to most complete.
    pub fn ablation_grid() -> [(&'static str, SolverConfig); 5] {
        let row = |use_t_max, use_initial_guess, use_stage1| SolverConfig {
            use_t_max,
            use_initial_guess,
            use_stage1,
            ..SolverConfig::default()
        };
        [
            ("no T_max, no initial guess, no stage 1", row(false, false, false)),
            ("T_max, no initial guess, no stage 1", row(true, false, false)),
            ("no T_max, no initial guess, stage 1", row(false, false, true)),
            ("T_max, initial guess, no stage 1", row(true, true, false)),
            ("T_max, initial guess, stage 1", row(true, true, true)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub params: ControlParams,
    /// `F_BV` (or `F_it` for the iterative refinement) at `params`.
    pub cost: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub params: ControlParams,
    /// Final `F_BV`.
    pub cost: f64,
    pub success: bool,
    pub stage1_cost: f64,
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    /// Seconds.
    pub wall_time: f64,
}

/// Starting point shared by stage 1 and the no-stage-1 ablations.
pub fn starting_params(problem: &Problem, cfg: &SolverConfig) -> ControlParams {
    let horizon = if cfg.use_t_max {
        t_upper_bound(problem)
    } else {
        FIXED_HORIZON_GUESS
    };
    let alpha = if cfg.use_initial_guess {
        initial_guess(problem).alpha()
    } else {
        FIXED_ALPHA_GUESS
    };
    ControlParams::new(alpha, horizon)
}

/// Fits the adjoint line with the horizon held fixed.
pub fn stage1(problem: &Problem, cfg: &SolverConfig) -> StageOutcome {
    let start = starting_params(problem, cfg);
    let horizon = start.duration;
    let residuals = |a: &[f64]| {
        let params = ControlParams::new([a[0], a[1], a[2], a[3]], horizon);
        bv_residuals(&params, problem).ok().map(|r| r.to_vec())
    };
    let lower = [f64::NEG_INFINITY; 4];
    let outcome = minimize(residuals, &start.alpha(), &lower, &cfg.optimizer);
    finish_stage(outcome, |v| ControlParams::new([v[0], v[1], v[2], v[3]], horizon), start)
}

/// Refines `(α, T)` against `F_BV` with `T ≥ 0`.
pub fn stage2(problem: &Problem, init: &ControlParams, cfg: &SolverConfig) -> SolveResult {
    let started = Instant::now();
    let outcome = refine_bv(problem, init, &cfg.optimizer);
    let (success, cost) = judge(problem, &outcome.params, cfg);
    SolveResult {
        params: outcome.params,
        cost,
        success,
        stage1_cost: f64::NAN,
        stage1_iterations: 0,
        stage2_iterations: outcome.iterations,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Stage 1 (when enabled) followed by stage 2.
pub fn solve(problem: &Problem, cfg: &SolverConfig) -> SolveResult {
    let started = Instant::now();
    let (init, stage1_cost, stage1_iterations) = if cfg.use_stage1 {
        let s1 = stage1(problem, cfg);
        (s1.params, s1.cost, s1.iterations)
    } else {
        let start = starting_params(problem, cfg);
        let cost = cost_bv(&start, problem).map_or(f64::INFINITY, |c| c.total);
        (start, cost, 0)
    };
    let refined = refine_bv(problem, &init, &cfg.optimizer);
    let (success, cost) = judge(problem, &refined.params, cfg);

    if success {
        let bound = t_upper_bound(problem);
        if refined.params.duration > bound + 1e-6 {
            log::warn!(
                "solution horizon {} exceeds the upper bound {} for {:?}",
                refined.params.duration,
                bound,
                problem
            );
        }
    }

    SolveResult {
        params: refined.params,
        cost,
        success,
        stage1_cost,
        stage1_iterations,
        stage2_iterations: refined.iterations,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Stage-2 minimization of `F_BV` over all five parameters.
pub(crate) fn refine_bv(problem: &Problem, init: &ControlParams, cfg: &OptimizerConfig) -> StageOutcome {
    let residuals = |v: &[f64]| {
        let params = vector_params(v);
        bv_residuals(&params, problem).ok().map(|r| r.to_vec())
    };
    let start = clamp_horizon(init);
    let outcome = minimize(residuals, &start.to_vector(), &STAGE2_LOWER, cfg);
    finish_stage(outcome, vector_params, start)
}

/// Stage-2 minimization of the time-regularized iterative cost.
pub(crate) fn refine_iterative(
    problem: &Problem,
    init: &ControlParams,
    expected_time: f64,
    controller: &ControllerConfig,
    cfg: &OptimizerConfig,
) -> StageOutcome {
    let residuals = |v: &[f64]| {
        let params = vector_params(v);
        iterative_residuals(&params, problem, expected_time, controller)
            .ok()
            .map(|r| r.to_vec())
    };
    let start = clamp_horizon(init);
    let outcome = minimize(residuals, &start.to_vector(), &STAGE2_LOWER, cfg);
    finish_stage(outcome, vector_params, start)
}

const STAGE2_LOWER: [f64; 5] = [
    f64::NEG_INFINITY,
    f64::NEG_INFINITY,
    f64::NEG_INFINITY,
    f64::NEG_INFINITY,
    0.0,
];

fn vector_params(v: &[f64]) -> ControlParams {
    ControlParams::from_vector([v[0], v[1], v[2], v[3], v[4]])
}

fn clamp_horizon(p: &ControlParams) -> ControlParams {
    let d = if p.duration.is_finite() { p.duration.max(0.0) } else { 0.0 };
    p.with_duration(d)
}

fn finish_stage(
    outcome: Result<crate::optimizer::OptimizerReport>,
    to_params: impl Fn(&[f64]) -> ControlParams,
    fallback: ControlParams,
) -> StageOutcome {
    match outcome {
        Ok(report) if report.status != Status::EvaluationError => StageOutcome {
            params: to_params(&report.final_params).normalized(),
            cost: 2.0 * report.final_cost,
            iterations: report.iterations,
        },
        _ => StageOutcome {
            params: fallback,
            cost: f64::INFINITY,
            iterations: 0,
        },
    }
}

/// Success test: `F_BV` below threshold, and no zero-length "solution" to a
/// problem that requires motion.
fn judge(problem: &Problem, params: &ControlParams, cfg: &SolverConfig) -> (bool, f64) {
    let cost = cost_bv(params, problem).map_or(f64::INFINITY, |c| c.total);
    let moved = (problem.goal.pos - problem.initial.pos).norm() + (problem.goal.vel - problem.initial.vel).norm();
    let reverse_time = params.duration <= MIN_HORIZON && moved > MIN_HORIZON;
    (cost < cfg.success_cost_threshold && !reverse_time, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{State, Vec2};
    use crate::trajectory::eval_state;

    fn rest_to_rest(d: f64) -> Problem {
        Problem::new(State::default(), State::at_rest(Vec2::new(d, 0.0)), 1.0).unwrap()
    }

    fn figure_problem() -> Problem {
        Problem::new(
            State::default(),
            State::new(Vec2::new(1.0, 0.0), Vec2::new(-2.0, 4.0)),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn stage1_lands_close_at_upper_bound() {
        let p = rest_to_rest(1.0);
        let s1 = stage1(&p, &SolverConfig::default());
        assert_eq!(s1.params.duration, 2.0);
        let c = cost_bv(&s1.params, &p).unwrap().total;
        assert!(c < 1e-3, "stage 1 cost {c}");
    }

    #[test]
    fn stage1_at_goal_is_immediate() {
        let p = Problem::new(State::default(), State::default(), 1.0).unwrap();
        let s1 = stage1(&p, &SolverConfig::default());
        assert_eq!(s1.params.duration, 0.0);
        assert_eq!(s1.cost, 0.0);
        assert_eq!(s1.iterations, 0);
    }

    #[test]
    fn stage1_ablation_start() {
        let cfg = SolverConfig {
            use_t_max: false,
            use_initial_guess: false,
            ..SolverConfig::default()
        };
        let start = starting_params(&figure_problem(), &cfg);
        assert_eq!(start.alpha(), FIXED_ALPHA_GUESS);
        assert_eq!(start.duration, 1.0);
        assert_eq!(stage1(&figure_problem(), &cfg).params.duration, 1.0);
    }

    #[test]
    fn stage2_recovers_rest_to_rest_optimum() {
        let p = rest_to_rest(1.0);
        let cfg = SolverConfig::default();
        let s1 = stage1(&p, &cfg);
        let r = stage2(&p, &s1.params, &cfg);
        assert!(r.success, "{r:?}");
        assert!((r.params.duration - 2.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn stage2_keeps_an_optimal_start() {
        let p = figure_problem();
        let cfg = SolverConfig::default();
        let solved = solve(&p, &cfg);
        assert!(solved.success);
        let again = stage2(&p, &solved.params, &cfg);
        assert!(again.success);
        assert!(again.stage2_iterations <= 5, "{again:?}");
        assert!((again.params.duration - solved.params.duration).abs() < 1e-6);
    }

    #[test]
    fn solves_figure_problem() {
        let p = figure_problem();
        let r = solve(&p, &SolverConfig::default());
        assert!(r.success, "{r:?}");
        assert!(r.cost < 1e-5);
        let end = eval_state(&r.params, &p.initial, p.u_max, r.params.duration).unwrap();
        assert!((end.pos - p.goal.pos).norm() < 3e-3);
        assert!((end.vel - p.goal.vel).norm() < 3e-3);
    }

    #[test]
    fn goal_equal_to_start() {
        let s = State::default();
        let p = Problem::new(s, s, 1.0).unwrap();
        let r = solve(&p, &SolverConfig::default());
        assert!(r.success);
        assert!(r.params.duration < 1e-9);
    }

    #[test]
    fn solve_is_deterministic() {
        let p = figure_problem();
        let mut a = solve(&p, &SolverConfig::default());
        let mut b = solve(&p, &SolverConfig::default());
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        assert_eq!(a, b);
    }
}
