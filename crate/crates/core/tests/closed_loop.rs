use tsocs_core::controller::{run_controller, Termination};
use tsocs_core::harness::{sample_problems, FinalVelocityMode, SamplerSpec};
use tsocs_core::simulator::{run_trial, reference_time, Mode, NoisyPlant, SimConfig};
use tsocs_core::{shift_params, solve, eval_state, ControllerConfig, SolverConfig};

#[test]
fn noisy_runs_reach_the_goal_region() {
    let spec = SamplerSpec { count: 20, ..SamplerSpec::default() };
    let cfg = ControllerConfig::simulation();
    let sim = SimConfig { noise_level: 0.05, seed: 17, ..SimConfig::default() };
    let mut errors = Vec::new();
    for (i, p) in sample_problems(&spec, 4).unwrap().iter().enumerate() {
        let mut plant = NoisyPlant::new(sim, sim.rng_for(i as u64));
        let run = run_controller(p, &cfg, &mut plant);
        assert_ne!(run.termination, Termination::TimedOut, "{p:?}");
        assert!(run.final_pos_err.is_finite() && run.final_vel_err.is_finite());
        errors.push(run.final_pos_err);
    }
    errors.sort_by(f64::total_cmp);
    assert!(errors[errors.len() / 2] < 0.05, "{errors:?}");
}

#[test]
fn trials_are_reproducible_per_index() {
    let p = sample_problems(&SamplerSpec { count: 1, ..SamplerSpec::default() }, 8).unwrap()[0];
    let cfg = ControllerConfig::default();
    let sim = SimConfig { noise_level: 0.1, seed: 2, ..SimConfig::default() };
    let t_o = reference_time(&p, &cfg).unwrap();
    let a = run_trial(&p, &cfg, &sim, Mode::Tsocs, t_o, 5);
    let b = run_trial(&p, &cfg, &sim, Mode::Tsocs, t_o, 5);
    let c = run_trial(&p, &cfg, &sim, Mode::Tsocs, t_o, 6);
    assert_eq!((a.t_f, a.final_pos_err), (b.t_f, b.final_pos_err));
    assert_ne!(a.final_pos_err, c.final_pos_err);
}

#[test]
fn shifted_parameters_continue_the_trajectory() {
    let spec = SamplerSpec { count: 5, final_vel_mode: FinalVelocityMode::Sampled, ..SamplerSpec::default() };
    let dt = 1.0 / 60.0;
    for p in sample_problems(&spec, 12).unwrap() {
        let r = solve(&p, &SolverConfig::default());
        assert!(r.success);
        let mut params = r.params;
        for k in 1..=20 {
            let here = eval_state(&r.params, &p.initial, p.u_max, k as f64 * dt).unwrap();
            params = shift_params(&params, dt);
            let ahead = eval_state(&params, &here, p.u_max, params.duration).unwrap();
            assert!((ahead.pos - p.goal.pos).norm() < 1e-2);
        }
    }
}
