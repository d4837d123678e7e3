//! Iterative closed-loop control.
//!
//! Every tick the controller advances the adjoint line by the elapsed time,
//! refines the shifted parameters against the time-regularized cost from the
//! newly observed state, and falls back first to a full two-stage re-solve and
//! then to open-loop execution of the last good parameters.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Problem, State, Vec2};
use crate::solver::{refine_iterative, solve, stage1, SolverConfig};
use crate::trajectory::{eval_control, t_upper_bound, velocity_weight, ControlParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Control period in seconds.
    pub dt: f64,
    /// Horizon ratio `T/T_e` at which the time penalty reaches `k1`.
    pub tau: f64,
    pub k1: f64,
    pub k2: f64,
    pub beta_min: f64,
    /// Goal position tolerance (m).
    pub eps_x: f64,
    /// Goal velocity tolerance (m/s).
    pub eps_v: f64,
    /// Refinements with `F_it` below this are accepted.
    pub eps_cost: f64,
    /// Simulated-time cap as a multiple of the initial upper bound.
    pub max_time_factor: f64,
    pub solver: SolverConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 60.0,
            tau: 1.4,
            k1: 1.0,
            k2: 50.0,
            beta_min: 0.01,
            eps_x: 0.02,
            eps_v: 0.02,
            eps_cost: 1e-5,
            max_time_factor: 10.0,
            solver: SolverConfig::default(),
        }
    }
}

impl ControllerConfig {
    /// Settings for simulated experiments: no time penalty and full velocity
    /// weight.
    pub fn simulation() -> Self {
        Self {
            k1: 0.0,
            beta_min: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(what.into()))
            }
        };
        check(self.dt > 0.0 && self.dt.is_finite(), "dt must be positive")?;
        check(self.tau > 1.0, "tau must exceed 1")?;
        check(self.k1 >= 0.0 && self.k2 >= 0.0, "k1 and k2 must be non-negative")?;
        check(self.beta_min > 0.0 && self.beta_min <= 1.0, "beta_min must lie in (0, 1]")?;
        check(self.eps_x > 0.0 && self.eps_v > 0.0 && self.eps_cost > 0.0, "tolerances must be positive")?;
        check(self.max_time_factor > 0.0, "max_time_factor must be positive")?;
        self.solver.validate()
    }

    fn reached(&self, observed: &State, problem: &Problem) -> bool {
        (observed.pos - problem.goal.pos).norm() <= self.eps_x && (observed.vel - problem.goal.vel).norm() <= self.eps_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Parameters whose time origin is the last observation.
    pub params: ControlParams,
    /// Expected remaining time `T_e` used by the time penalty.
    pub expected_time: f64,
    pub last_good_params: ControlParams,
    pub open_loop: bool,
    /// Time executed since `params` were adopted; applied as a shift on the
    /// next tick.
    pub pending_shift: f64,
}

impl ControllerState {
    pub fn new(params: ControlParams) -> Self {
        Self {
            params,
            expected_time: params.duration,
            last_good_params: params,
            open_loop: false,
            pending_shift: 0.0,
        }
    }
}

/// Advances the adjoint origin by `dt` along the adjoint line.
pub fn shift_params(params: &ControlParams, dt: f64) -> ControlParams {
    params.shifted(dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TickSource {
    /// The shifted parameters were refined successfully.
    Refined,
    /// Refinement failed; a full two-stage re-solve succeeded.
    Resolved,
    /// Both failed; following the last good parameters.
    OpenLoop,
    /// Remaining horizon shorter than a tick; no re-solve.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickDiagnostics {
    pub source: TickSource,
    /// `F_it` of the adopted refinement (`NaN` when none was run).
    pub cost: f64,
    pub velocity_weight: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ReachedGoal,
    HorizonElapsed,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tick {
    Finished(Termination),
    Command {
        /// Acceleration to hold for `duration` seconds.
        command: Vec2,
        duration: f64,
        state: ControllerState,
        diagnostics: TickDiagnostics,
    },
}

/// Control direction at the adjoint origin. If the adjoint vanishes exactly
/// there, the direction it takes immediately afterwards.
pub fn command_at_origin(params: &ControlParams, u_max: f64) -> Vec2 {
    match eval_control(params, u_max, 0.0) {
        Ok(u) => u,
        Err(_) => params.slope().normalized().map_or(Vec2::ZERO, |d| d * u_max),
    }
}

/// One iteration of the closed loop.
pub fn controller_tick(state: &ControllerState, observed: &State, problem: &Problem, cfg: &ControllerConfig) -> Tick {
    if cfg.reached(observed, problem) {
        return Tick::Finished(Termination::ReachedGoal);
    }
    let shifted = shift_params(&state.params, state.pending_shift);
    if shifted.duration <= 0.0 {
        return Tick::Finished(Termination::HorizonElapsed);
    }
    let current = problem.with_initial(*observed);
    let beta = velocity_weight(&current, shifted.duration.max(cfg.dt), cfg.beta_min);

    if shifted.duration <= cfg.dt {
        let next = ControllerState {
            params: shifted,
            last_good_params: shifted,
            pending_shift: shifted.duration,
            ..*state
        };
        return Tick::Command {
            command: command_at_origin(&shifted, problem.u_max),
            duration: shifted.duration,
            state: next,
            diagnostics: TickDiagnostics {
                source: TickSource::Final,
                cost: f64::NAN,
                velocity_weight: beta,
                solve_seconds: 0.0,
            },
        };
    }

    let expected_time = shifted.duration.max(cfg.dt);
    let started = Instant::now();
    let refined = refine_iterative(&current, &shifted, expected_time, cfg, &cfg.solver.optimizer);
    let (adopted, source, cost) = if refined.cost < cfg.eps_cost {
        (Some(refined.params), TickSource::Refined, refined.cost)
    } else {
        let s1 = stage1(&current, &cfg.solver);
        let resolved = refine_iterative(&current, &s1.params, expected_time, cfg, &cfg.solver.optimizer);
        if resolved.cost < cfg.eps_cost {
            (Some(resolved.params), TickSource::Resolved, resolved.cost)
        } else {
            (None, TickSource::OpenLoop, refined.cost.min(resolved.cost))
        }
    };
    let solve_seconds = started.elapsed().as_secs_f64();

    let (params, open_loop) = match adopted {
        Some(p) => (p, false),
        None => (shifted, true),
    };
    let duration = params.duration.min(cfg.dt);
    let next = ControllerState {
        params,
        expected_time,
        last_good_params: params,
        open_loop,
        pending_shift: duration,
    };
    Tick::Command {
        command: command_at_origin(&params, problem.u_max),
        duration,
        state: next,
        diagnostics: TickDiagnostics {
            source,
            cost,
            velocity_weight: beta,
            solve_seconds,
        },
    }
}

/// Advances the true state under a commanded acceleration.
pub trait Plant {
    fn step(&mut self, state: &State, command: Vec2, dt: f64) -> State;
}

impl<F> Plant for F
where
    F: FnMut(&State, Vec2, f64) -> State,
{
    fn step(&mut self, state: &State, command: Vec2, dt: f64) -> State {
        self(state, command, dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRun {
    /// Executed time `T_f` in seconds.
    pub executed_time: f64,
    pub final_state: State,
    pub final_pos_err: f64,
    pub final_vel_err: f64,
    /// Seconds spent solving, one entry per re-solving tick.
    pub solve_times: Vec<f64>,
    /// Seconds spent on the initial two-stage solve.
    pub initial_solve_time: f64,
    pub ticks: usize,
    pub open_loop_ticks: usize,
    pub resolved_ticks: usize,
    pub termination: Termination,
    /// Horizon of the initial solve.
    pub planned_time: f64,
    pub initial_solve_succeeded: bool,
    /// Largest commanded acceleration magnitude.
    pub max_command: f64,
}

impl ControllerRun {
    pub fn timed_out(&self) -> bool {
        self.termination == Termination::TimedOut
    }
}

/// Runs the closed loop until the goal tolerances are met, the planned
/// horizon runs out, or `max_time_factor` times the upper bound elapses.
pub fn run_controller<P: Plant>(problem: &Problem, cfg: &ControllerConfig, plant: &mut P) -> ControllerRun {
    let mut truth = problem.initial;
    let cap = cfg.max_time_factor * t_upper_bound(problem) + cfg.dt;
    let mut run = ControllerRun {
        executed_time: 0.0,
        final_state: truth,
        final_pos_err: 0.0,
        final_vel_err: 0.0,
        solve_times: Vec::new(),
        initial_solve_time: 0.0,
        ticks: 0,
        open_loop_ticks: 0,
        resolved_ticks: 0,
        termination: Termination::ReachedGoal,
        planned_time: 0.0,
        initial_solve_succeeded: true,
        max_command: 0.0,
    };

    if !cfg.reached(&truth, problem) {
        let initial = solve(problem, &cfg.solver);
        run.initial_solve_time = initial.wall_time;
        run.planned_time = initial.params.duration;
        run.initial_solve_succeeded = initial.success;
        let mut ctrl = ControllerState::new(initial.params);
        ctrl.open_loop = !initial.success;

        run.termination = loop {
            match controller_tick(&ctrl, &truth, problem, cfg) {
                Tick::Finished(reason) => break reason,
                Tick::Command {
                    command,
                    duration,
                    state,
                    diagnostics,
                } => {
                    truth = plant.step(&truth, command, duration);
                    run.executed_time += duration;
                    run.ticks += 1;
                    run.max_command = run.max_command.max(command.norm());
                    match diagnostics.source {
                        TickSource::Final => {}
                        TickSource::OpenLoop => run.open_loop_ticks += 1,
                        TickSource::Resolved => run.resolved_ticks += 1,
                        TickSource::Refined => {}
                    }
                    if diagnostics.source != TickSource::Final {
                        run.solve_times.push(diagnostics.solve_seconds);
                    }
                    ctrl = state;
                    if run.executed_time >= cap {
                        break Termination::TimedOut;
                    }
                }
            }
        };
    }

    run.final_state = truth;
    run.final_pos_err = (truth.pos - problem.goal.pos).norm();
    run.final_vel_err = (truth.vel - problem.goal.vel).norm();
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::eval_state;
    use approx::assert_abs_diff_eq;

    fn exact_plant(state: &State, command: Vec2, dt: f64) -> State {
        State {
            pos: state.pos + state.vel * dt + command * (0.5 * dt * dt),
            vel: state.vel + command * dt,
        }
    }

    #[test]
    fn shift_moves_intercept_along_slope() {
        let p = shift_params(&ControlParams::new([1.0, 2.0, 3.0, 4.0], 2.0), 0.5);
        assert_eq!(p.alpha(), [1.0, 2.0, 3.5, 5.0]);
        assert_eq!(p.duration, 1.5);

        let p = shift_params(&ControlParams::new([0.0, 0.0, 1.0, 0.0], 2.0), 0.25);
        assert_eq!(p.alpha(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.duration, 1.75);
    }

    #[test]
    fn shifted_params_continue_the_trajectory() {
        let params = ControlParams::new([0.4, -1.1, 0.8, 0.6], 3.0);
        let init = State::new(Vec2::new(0.1, 0.2), Vec2::new(-0.3, 0.9));
        let dt = 0.1;
        let mid = eval_state(&params, &init, 1.5, dt).unwrap();
        let shifted = shift_params(&params, dt);
        for t in [0.0, 0.3, 1.0, 2.5] {
            let a = eval_state(&shifted, &mid, 1.5, t).unwrap();
            let b = eval_state(&params, &init, 1.5, t + dt).unwrap();
            assert_abs_diff_eq!(a.pos.x, b.pos.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.pos.y, b.pos.y, epsilon = 1e-12);
            assert_abs_diff_eq!(a.vel.x, b.vel.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.vel.y, b.vel.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn tick_at_goal_issues_no_command() {
        let goal = State::new(Vec2::new(1.0, 0.0), Vec2::ZERO);
        let problem = Problem::new(State::default(), goal, 1.0).unwrap();
        let near = State::new(Vec2::new(1.005, 0.0), Vec2::new(0.01, 0.0));
        let ctrl = ControllerState::new(ControlParams::new([1.0, 0.0, -1.0, 0.0], 2.0));
        let tick = controller_tick(&ctrl, &near, &problem, &ControllerConfig::default());
        assert_eq!(tick, Tick::Finished(Termination::ReachedGoal));
    }

    #[test]
    fn failed_refinement_falls_back_to_open_loop() {
        // An unreachable acceptance threshold forces both solves to "fail".
        let cfg = ControllerConfig {
            eps_cost: 1e-300,
            k1: 1.0,
            ..ControllerConfig::default()
        };
        let problem = Problem::new(State::default(), State::at_rest(Vec2::new(1.0, 0.0)), 1.0).unwrap();
        let good = solve(&problem, &cfg.solver).params;
        let mut ctrl = ControllerState::new(good);
        ctrl.pending_shift = cfg.dt;
        let observed = exact_plant(&problem.initial, command_at_origin(&good, 1.0), cfg.dt);
        let Tick::Command { command, state, diagnostics, .. } = controller_tick(&ctrl, &observed, &problem, &cfg) else {
            panic!("expected a command");
        };
        assert_eq!(diagnostics.source, TickSource::OpenLoop);
        assert!(state.open_loop);
        let expected = shift_params(&good, cfg.dt);
        assert_eq!(state.params, expected);
        assert_eq!(state.last_good_params, expected);
        assert_eq!(command, command_at_origin(&expected, 1.0));
    }

    #[test]
    fn noise_free_rest_to_rest() {
        let cfg = ControllerConfig::default();
        let problem = Problem::new(State::default(), State::at_rest(Vec2::new(1.0, 0.0)), 1.0).unwrap();
        let run = run_controller(&problem, &cfg, &mut exact_plant);
        assert!((run.executed_time - 2.0).abs() <= 2.0 * cfg.dt, "{run:?}");
        assert!(run.final_pos_err < cfg.eps_x, "{run:?}");
        assert!(run.final_vel_err < cfg.eps_v, "{run:?}");
        assert_eq!(run.open_loop_ticks, 0);
        assert!(run.max_command <= 1.0 + 1e-12);
    }

    #[test]
    fn starting_at_goal_terminates_immediately() {
        let s = State::new(Vec2::new(2.0, 1.0), Vec2::ZERO);
        let problem = Problem::new(s, s, 1.0).unwrap();
        let run = run_controller(&problem, &ControllerConfig::default(), &mut exact_plant);
        assert_eq!(run.executed_time, 0.0);
        assert_eq!(run.ticks, 0);
        assert_eq!(run.termination, Termination::ReachedGoal);
    }

    #[test]
    fn noise_free_ticks_accept_shifted_params() {
        let cfg = ControllerConfig::default();
        let problem = Problem::new(
            State::new(Vec2::new(-1.0, 0.5), Vec2::new(0.5, 0.5)),
            State::new(Vec2::ZERO, Vec2::new(0.8, -0.4)),
            1.0,
        )
        .unwrap();
        let run = run_controller(&problem, &cfg, &mut exact_plant);
        assert_eq!(run.open_loop_ticks, 0, "{run:?}");
        assert_eq!(run.resolved_ticks, 0, "{run:?}");
        assert!(run.final_pos_err < cfg.eps_x && run.final_vel_err < cfg.eps_v, "{run:?}");
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig { tau: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ControllerConfig { beta_min: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
