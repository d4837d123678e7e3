//! Discrete-time plant with multiplicative actuation noise, the
//! three-segment baseline, and single-trial execution.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::{run_controller, ControllerConfig, Plant, Termination};
use crate::error::{Error, Result};
use crate::geometry::{Problem, State, Vec2};
use crate::solver::solve;
use crate::trajectory::{eval_state, middle_segment, t_upper_bound, ControlParams};

/// Law of the per-tick velocity scale factor `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// `Normal(1, n)` truncated to `[1 - 3n, 1 + 3n]`.
    #[default]
    TruncatedGaussian,
    /// Uniform on `[1 - n, 1 + n]`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Control rate in Hz.
    pub rate: f64,
    pub noise_level: f64,
    pub noise_law: NoiseLaw,
    pub seed: u64,
    /// Simulated-time cap as a multiple of the upper bound.
    pub max_time_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rate: 60.0,
            noise_level: 0.0,
            noise_law: NoiseLaw::TruncatedGaussian,
            seed: 0,
            max_time_factor: 10.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("rate must be positive, got {}", self.rate)));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise level must be non-negative, got {}",
                self.noise_level
            )));
        }
        if !(self.max_time_factor > 0.0) {
            return Err(Error::InvalidConfig("max_time_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    /// Independent stream for trial `index`.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Draws the velocity scale `η` for one tick.
pub fn sample_eta<R: Rng + ?Sized>(noise_level: f64, law: NoiseLaw, rng: &mut R) -> f64 {
    if noise_level == 0.0 {
        return 1.0;
    }
    match law {
        NoiseLaw::Uniform => rng.gen_range(1.0 - noise_level..=1.0 + noise_level),
        NoiseLaw::TruncatedGaussian => {
            let normal = Normal::new(1.0, noise_level).expect("finite noise level");
            loop {
                let eta = normal.sample(rng);
                if (eta - 1.0).abs() <= 3.0 * noise_level {
                    break eta;
                }
            }
        }
    }
}

/// One plant update: `v' = (v + a·dt)·η` and `x' = x + (v + v')/2·dt`.
pub fn plant_step<R: Rng + ?Sized>(state: &State, command: Vec2, dt: f64, sim: &SimConfig, rng: &mut R) -> State {
    let nominal = state.vel + command * dt;
    let eta = sample_eta(sim.noise_level, sim.noise_law, rng);
    let vel = nominal * eta;
    State {
        pos: state.pos + (state.vel + vel) * (0.5 * dt),
        vel,
    }
}

/// `plant_step` with its own seeded random stream.
pub struct NoisyPlant {
    pub sim: SimConfig,
    rng: ChaCha8Rng,
}

impl NoisyPlant {
    pub fn new(sim: SimConfig, rng: ChaCha8Rng) -> Self {
        Self { sim, rng }
    }
}

impl Plant for NoisyPlant {
    fn step(&mut self, state: &State, command: Vec2, dt: f64) -> State {
        plant_step(state, command, dt, &self.sim, &mut self.rng)
    }
}

/// Constant acceleration held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub accel: Vec2,
    pub duration: f64,
}

/// Brake to rest, translate from rest to rest, then accelerate from rest to
/// the goal velocity. Each segment is a 1D bang-bang motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSchedule {
    pub brake: Piece,
    /// Accelerate and decelerate halves of the middle segment.
    pub translate: [Piece; 2],
    pub accelerate: Piece,
}

impl BaselineSchedule {
    pub fn pieces(&self) -> [Piece; 4] {
        [self.brake, self.translate[0], self.translate[1], self.accelerate]
    }

    /// Durations of the brake, translate and accelerate segments.
    pub fn segment_durations(&self) -> [f64; 3] {
        [
            self.brake.duration,
            self.translate[0].duration + self.translate[1].duration,
            self.accelerate.duration,
        ]
    }

    pub fn total_duration(&self) -> f64 {
        self.segment_durations().iter().sum()
    }

    /// Mean acceleration over `[t0, t1]`; exact velocity change divided by the
    /// interval.
    pub fn mean_acceleration(&self, t0: f64, t1: f64) -> Vec2 {
        if t1 <= t0 {
            return Vec2::ZERO;
        }
        let mut start = 0.0;
        let mut dv = Vec2::ZERO;
        for piece in self.pieces() {
            let end = start + piece.duration;
            let overlap = (end.min(t1) - start.max(t0)).max(0.0);
            dv += piece.accel * overlap;
            start = end;
        }
        dv / (t1 - t0)
    }
}

/// The three-segment schedule whose length is `t_upper_bound(problem)`.
pub fn three_segment_baseline(problem: &Problem) -> BaselineSchedule {
    let u = problem.u_max;
    let piece_along = |v: Vec2, sign: f64| Piece {
        accel: v.normalized().map_or(Vec2::ZERO, |d| d * (sign * u)),
        duration: v.norm() / u,
    };
    let middle = middle_segment(problem);
    let half = (middle.norm() / u).sqrt();
    let dir = middle.normalized().unwrap_or(Vec2::ZERO);
    BaselineSchedule {
        brake: piece_along(problem.initial.vel, -1.0),
        translate: [
            Piece {
                accel: dir * u,
                duration: half,
            },
            Piece {
                accel: dir * -u,
                duration: half,
            },
        ],
        accelerate: piece_along(problem.goal.vel, 1.0),
    }
}

/// Executes a schedule open loop, splitting plant steps at piece boundaries
/// so that a noise-free plant integrates it exactly.
pub fn execute_schedule<P: Plant>(schedule: &BaselineSchedule, initial: &State, plant: &mut P) -> State {
    let mut state = *initial;
    for piece in schedule.pieces() {
        if piece.duration > 0.0 {
            state = plant.step(&state, piece.accel, piece.duration);
        }
    }
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Iterative closed-loop TSOCS.
    Tsocs,
    /// Three-segment schedule, re-planned from the observed state whenever it
    /// runs out before the goal is reached.
    Baseline,
    /// The initial TSOCS solution executed without feedback.
    OpenLoop,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Tsocs => "tsocs",
            Mode::Baseline => "baseline",
            Mode::OpenLoop => "open_loop",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsocs" => Ok(Mode::Tsocs),
            "baseline" => Ok(Mode::Baseline),
            "open_loop" | "open-loop" => Ok(Mode::OpenLoop),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Outcome of one simulated trial. Times in seconds, errors in m and m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub mode: Mode,
    pub noise: f64,
    pub beta_min: f64,
    pub t_f: f64,
    pub t_o: f64,
    pub t_rel: f64,
    pub final_pos_err: f64,
    pub final_vel_err: f64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
    /// Number of solves behind the latency figures.
    pub solves: u64,
    pub ticks: u64,
    pub open_loop_ticks: u64,
    pub timed_out: bool,
}

/// Reference optimal time for `T_rel`: the horizon of a successful noise-free
/// solve, or `None` if the problem is unsolved.
pub fn reference_time(problem: &Problem, cfg: &ControllerConfig) -> Option<f64> {
    let r = solve(problem, &cfg.solver);
    r.success.then_some(r.params.duration)
}

/// Runs one trial. `t_o` is the reference optimal time of `problem`; pass
/// NaN when it is unknown, which makes `t_rel` NaN as well.
pub fn run_trial(
    problem: &Problem,
    controller: &ControllerConfig,
    sim: &SimConfig,
    mode: Mode,
    t_o: f64,
    index: u64,
) -> TrialRecord {
    let cfg = ControllerConfig {
        dt: sim.dt(),
        max_time_factor: sim.max_time_factor,
        ..*controller
    };
    let mut plant = NoisyPlant::new(*sim, sim.rng_for(index));
    let outcome = match mode {
        Mode::Tsocs => {
            let run = run_controller(problem, &cfg, &mut plant);
            let (mean, max) = latency_ms(&run.solve_times);
            Outcome {
                t_f: run.executed_time,
                final_state: run.final_state,
                mean_solve_ms: mean,
                max_solve_ms: max,
                solves: run.solve_times.len(),
                ticks: run.ticks,
                open_loop_ticks: run.open_loop_ticks,
                timed_out: run.termination == Termination::TimedOut,
            }
        }
        Mode::Baseline => run_baseline(problem, &cfg, &mut plant),
        Mode::OpenLoop => run_open_loop(problem, &cfg, &mut plant),
    };
    let t_rel = if t_o > 0.0 {
        (outcome.t_f - t_o) / t_o
    } else if t_o == 0.0 {
        0.0
    } else {
        f64::NAN
    };
    TrialRecord {
        index,
        mode,
        noise: sim.noise_level,
        beta_min: controller.beta_min,
        t_f: outcome.t_f,
        t_o,
        t_rel,
        final_pos_err: (outcome.final_state.pos - problem.goal.pos).norm(),
        final_vel_err: (outcome.final_state.vel - problem.goal.vel).norm(),
        mean_solve_ms: outcome.mean_solve_ms,
        max_solve_ms: outcome.max_solve_ms,
        solves: outcome.solves as u64,
        ticks: outcome.ticks as u64,
        open_loop_ticks: outcome.open_loop_ticks as u64,
        timed_out: outcome.timed_out,
    }
}

struct Outcome {
    t_f: f64,
    final_state: State,
    mean_solve_ms: f64,
    max_solve_ms: f64,
    solves: usize,
    ticks: usize,
    open_loop_ticks: usize,
    timed_out: bool,
}

fn latency_ms(times: &[f64]) -> (f64, f64) {
    if times.is_empty() {
        return (0.0, 0.0);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let max = times.iter().cloned().fold(0.0, f64::max);
    (mean * 1e3, max * 1e3)
}

fn reached(state: &State, problem: &Problem, cfg: &ControllerConfig) -> bool {
    (state.pos - problem.goal.pos).norm() <= cfg.eps_x && (state.vel - problem.goal.vel).norm() <= cfg.eps_v
}

fn run_baseline<P: Plant>(problem: &Problem, cfg: &ControllerConfig, plant: &mut P) -> Outcome {
    let dt = cfg.dt;
    let cap = cfg.max_time_factor * t_upper_bound(problem) + dt;
    let mut state = problem.initial;
    let mut elapsed = 0.0;
    let mut ticks = 0;
    let mut schedule = three_segment_baseline(problem);
    let mut progress = 0.0;
    let mut timed_out = false;
    while !reached(&state, problem, cfg) {
        if schedule.total_duration() - progress <= 0.0 {
            schedule = three_segment_baseline(&problem.with_initial(state));
            progress = 0.0;
            if schedule.total_duration() <= dt {
                // Too close to re-plan at this rate; finish the short schedule.
                state = execute_schedule(&schedule, &state, plant);
                elapsed += schedule.total_duration();
                ticks += 1;
                break;
            }
        }
        let step = dt.min(schedule.total_duration() - progress);
        let accel = schedule.mean_acceleration(progress, progress + step);
        state = plant.step(&state, accel, step);
        progress += step;
        elapsed += step;
        ticks += 1;
        if elapsed >= cap {
            timed_out = true;
            break;
        }
    }
    Outcome {
        t_f: elapsed,
        final_state: state,
        mean_solve_ms: 0.0,
        max_solve_ms: 0.0,
        solves: 0,
        ticks,
        open_loop_ticks: 0,
        timed_out,
    }
}

/// Holds the mean optimal control of each tick, which reproduces the exact
/// velocity at tick boundaries when there is no noise.
fn run_open_loop<P: Plant>(problem: &Problem, cfg: &ControllerConfig, plant: &mut P) -> Outcome {
    let solved = solve(problem, &cfg.solver);
    let params: ControlParams = solved.params;
    let horizon = params.duration;
    let mut state = problem.initial;
    let mut t = 0.0;
    let mut ticks = 0;
    while t < horizon {
        let step = cfg.dt.min(horizon - t);
        let accel = match (
            eval_state(&params, &problem.initial, problem.u_max, t),
            eval_state(&params, &problem.initial, problem.u_max, t + step),
        ) {
            (Ok(a), Ok(b)) => (b.vel - a.vel) / step,
            _ => Vec2::ZERO,
        };
        state = plant.step(&state, accel, step);
        t += step;
        ticks += 1;
    }
    Outcome {
        t_f: t,
        final_state: state,
        mean_solve_ms: solved.wall_time * 1e3,
        max_solve_ms: solved.wall_time * 1e3,
        solves: 1,
        ticks,
        open_loop_ticks: ticks,
        timed_out: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet() -> SimConfig {
        SimConfig::default()
    }

    #[test]
    fn noiseless_step_is_exact_kinematics() {
        let s = State::new(Vec2::new(1.0, -2.0), Vec2::new(0.5, 0.25));
        let a = Vec2::new(-0.3, 0.8);
        let dt = 0.1;
        let next = plant_step(&s, a, dt, &quiet(), &mut quiet().rng_for(0));
        assert_abs_diff_eq!(next.vel.x, 0.5 - 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(next.vel.y, 0.25 + 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(next.pos.x, 1.0 + 0.05 - 0.5 * 0.3 * 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(next.pos.y, -2.0 + 0.025 + 0.5 * 0.8 * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn zero_command_drifts() {
        let s = State::new(Vec2::new(1.0, 1.0), Vec2::new(2.0, -1.0));
        let next = plant_step(&s, Vec2::ZERO, 0.5, &quiet(), &mut quiet().rng_for(0));
        assert_eq!(next.pos, Vec2::new(2.0, 0.5));
        assert_eq!(next.vel, s.vel);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let sim = SimConfig {
            noise_level: 0.05,
            seed: 7,
            ..SimConfig::default()
        };
        let run = |index| {
            let mut rng = sim.rng_for(index);
            let mut s = State::new(Vec2::ZERO, Vec2::new(1.0, 0.5));
            for _ in 0..100 {
                s = plant_step(&s, Vec2::new(0.2, -0.1), 1.0 / 60.0, &sim, &mut rng);
            }
            s
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn truncated_noise_stays_in_band() {
        let mut rng = quiet().rng_for(1);
        for _ in 0..10_000 {
            let eta = sample_eta(0.2, NoiseLaw::TruncatedGaussian, &mut rng);
            assert!((0.4..=1.6).contains(&eta));
            let eta = sample_eta(0.2, NoiseLaw::Uniform, &mut rng);
            assert!((0.8..=1.2).contains(&eta));
        }
    }

    #[test]
    fn constant_command_over_many_ticks_is_exact() {
        let s0 = State::new(Vec2::new(0.5, 0.0), Vec2::new(-1.0, 2.0));
        let a = Vec2::new(0.6, -0.8);
        let dt = 1.0 / 60.0;
        let mut rng = quiet().rng_for(0);
        let mut s = s0;
        for _ in 0..120 {
            s = plant_step(&s, a, dt, &quiet(), &mut rng);
        }
        let t = 120.0 * dt;
        let expected = s0.pos + s0.vel * t + a * (0.5 * t * t);
        assert_abs_diff_eq!(s.pos.x, expected.x, epsilon = 1e-12);
        assert_abs_diff_eq!(s.pos.y, expected.y, epsilon = 1e-12);
        assert_abs_diff_eq!(s.vel.x, s0.vel.x + a.x * t, epsilon = 1e-12);
    }

    #[test]
    fn baseline_rest_to_rest_is_middle_only() {
        let p = Problem::new(State::default(), State::at_rest(Vec2::new(4.0, 0.0)), 1.0).unwrap();
        let b = three_segment_baseline(&p);
        let [brake, middle, accel] = b.segment_durations();
        assert_eq!(brake, 0.0);
        assert_eq!(accel, 0.0);
        assert_abs_diff_eq!(middle, 4.0, epsilon = 1e-15);
    }

    #[test]
    fn baseline_with_braking_matches_upper_bound() {
        let p = Problem::new(
            State::new(Vec2::ZERO, Vec2::new(1.0, 0.0)),
            State::at_rest(Vec2::new(1.5, 0.0)),
            1.0,
        )
        .unwrap();
        let b = three_segment_baseline(&p);
        let d = b.segment_durations();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.total_duration(), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.total_duration(), t_upper_bound(&p), epsilon = 1e-9);
    }

    #[test]
    fn executed_baseline_reaches_goal() {
        let p = Problem::new(
            State::new(Vec2::new(-1.0, 2.0), Vec2::new(0.7, 1.1)),
            State::new(Vec2::new(0.5, -0.5), Vec2::new(-1.2, 0.4)),
            1.5,
        )
        .unwrap();
        let sim = quiet();
        let mut plant = NoisyPlant::new(sim, sim.rng_for(0));
        let end = execute_schedule(&three_segment_baseline(&p), &p.initial, &mut plant);
        assert!((end.pos - p.goal.pos).norm() < 1e-3);
        assert!((end.vel - p.goal.vel).norm() < 1e-3);
    }

    #[test]
    fn mean_acceleration_integrates_switches() {
        let p = Problem::new(State::default(), State::at_rest(Vec2::new(1.0, 0.0)), 1.0).unwrap();
        let b = three_segment_baseline(&p);
        // Switch at t = 1: half forward, half reverse.
        assert_abs_diff_eq!(b.mean_acceleration(0.5, 1.5).x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.mean_acceleration(0.0, 0.5).x, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn baseline_trial_without_noise_takes_upper_bound() {
        let p = Problem::new(
            State::new(Vec2::new(2.0, 1.0), Vec2::new(0.5, -0.5)),
            State::default(),
            1.0,
        )
        .unwrap();
        let cfg = ControllerConfig::default();
        let t_o = reference_time(&p, &cfg).unwrap();
        let r = run_trial(&p, &cfg, &quiet(), Mode::Baseline, t_o, 0);
        let t_max = t_upper_bound(&p);
        // Stops as soon as it is inside the goal tolerances.
        assert!(r.t_f <= t_max + 1e-9 && r.t_f >= t_max - cfg.eps_v / p.u_max - cfg.dt, "{r:?}");
        assert!(r.t_rel >= 0.0);
        assert!(r.final_pos_err <= cfg.eps_x && r.final_vel_err <= cfg.eps_v, "{r:?}");
    }

    #[test]
    fn tsocs_trial_without_noise_is_near_optimal() {
        let p = Problem::new(
            State::new(Vec2::new(2.0, 1.0), Vec2::new(0.5, -0.5)),
            State::default(),
            1.0,
        )
        .unwrap();
        let cfg = ControllerConfig::default();
        let t_o = reference_time(&p, &cfg).unwrap();
        let r = run_trial(&p, &cfg, &quiet(), Mode::Tsocs, t_o, 0);
        assert!(r.t_rel.abs() < 0.03, "{r:?}");
        let r2 = run_trial(&p, &cfg, &quiet(), Mode::Tsocs, t_o, 0);
        assert_eq!(r.t_f, r2.t_f);
        let open = run_trial(&p, &cfg, &quiet(), Mode::OpenLoop, t_o, 0);
        assert!(open.final_pos_err < 1e-2, "{open:?}");
        assert!(open.t_rel.abs() < 1e-9);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Tsocs, Mode::Baseline, Mode::OpenLoop] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
    }
}
