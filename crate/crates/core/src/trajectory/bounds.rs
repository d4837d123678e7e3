//! Upper bound on the optimal time and the 1D-projection starting point.

use crate::geometry::{Problem, Vec2};

use super::bang_bang::bang_bang_1d;
use super::params::ControlParams;

/// Angle by which the initial-guess adjoint line is tilted off the
/// displacement axis, keeping it clear of the bang-bang singular set.
pub const GUESS_TILT: f64 = 1e-3;

/// Time of the brake / translate / accelerate decomposition, an upper bound
/// on the optimal time.
///
/// Braking from `V^I` and accelerating to `V^F` take `(‖V^I‖ + ‖V^F‖)/u` and
/// cover `(V^I‖V^I‖ + V^F‖V^F‖)/(2u)`; the remaining straight segment from rest
/// to rest of length `D` takes `2√(D/u)`.
pub fn t_upper_bound(problem: &Problem) -> f64 {
    let u = problem.u_max;
    let vi = problem.initial.vel;
    let vf = problem.goal.vel;
    let middle = middle_segment(problem);
    (vi.norm() + vf.norm()) / u + 2.0 * (middle.norm() / u).sqrt()
}

/// Displacement left for the rest-to-rest middle segment.
pub fn middle_segment(problem: &Problem) -> Vec2 {
    let u = problem.u_max;
    let vi = problem.initial.vel;
    let vf = problem.goal.vel;
    problem.displacement() - (vf.scaled_by_norm() + vi.scaled_by_norm()) / (2.0 * u)
}

/// Direction of the 1D projection: the displacement, else the velocity
/// change, else the x axis.
pub fn projection_axis(problem: &Problem) -> Vec2 {
    let scale = 1.0 + problem.initial.pos.norm() + problem.goal.pos.norm();
    let d = problem.displacement();
    if d.norm() > 1e-12 * scale {
        if let Some(axis) = d.normalized() {
            return axis;
        }
    }
    let dv = problem.goal.vel - problem.initial.vel;
    let vscale = 1.0 + problem.initial.vel.norm() + problem.goal.vel.norm();
    if dv.norm() > 1e-12 * vscale {
        if let Some(axis) = dv.normalized() {
            return axis;
        }
    }
    Vec2::new(1.0, 0.0)
}

/// Projects the boundary velocities onto the displacement axis, solves the
/// resulting 1D problem, and encodes the bang-bang answer as an adjoint line
/// along that axis which crosses the origin at the switch time.
pub fn initial_guess(problem: &Problem) -> ControlParams {
    let axis = projection_axis(problem);
    let normal = axis.perp();
    let profile = bang_bang_1d(
        problem.displacement().dot(axis),
        problem.initial.vel.dot(axis),
        problem.goal.vel.dot(axis),
        problem.u_max,
    );
    let total = profile.total_time;
    if total <= 0.0 {
        return ControlParams::from_line(Vec2::ZERO, axis, 0.0);
    }

    let sign = profile.initial_sign;
    let dv_normal = (problem.goal.vel - problem.initial.vel).dot(normal);
    let side = if dv_normal < 0.0 { -1.0 } else { 1.0 };
    let reach = profile.switch_time.max(total - profile.switch_time);

    // ψ(t) = (t_s - t)·sign·axis, offset sideways by the tilt.
    let slope = axis * -sign;
    let intercept = axis * (sign * profile.switch_time) + normal * (side * GUESS_TILT.tan() * reach);
    ControlParams::from_line(slope, intercept, total).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::State;
    use crate::trajectory::eval_state;
    use approx::assert_abs_diff_eq;

    fn problem(vi: [f64; 2], xf: [f64; 2], vf: [f64; 2], u: f64) -> Problem {
        Problem::new(
            State::new(Vec2::ZERO, vi.into()),
            State::new(xf.into(), vf.into()),
            u,
        )
        .unwrap()
    }

    #[test]
    fn upper_bound_rest_to_rest() {
        assert_abs_diff_eq!(t_upper_bound(&problem([0.0, 0.0], [1.0, 0.0], [0.0, 0.0], 1.0)), 2.0);
        assert_eq!(t_upper_bound(&problem([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], 1.0)), 0.0);
    }

    #[test]
    fn upper_bound_with_braking() {
        let t = t_upper_bound(&problem([1.0, 0.0], [1.5, 0.0], [0.0, 0.0], 1.0));
        assert_abs_diff_eq!(t, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn upper_bound_scales_with_acceleration() {
        // Rest to rest over d takes 2√(d/u).
        let t = t_upper_bound(&problem([0.0, 0.0], [3.0, 4.0], [0.0, 0.0], 2.0));
        assert_abs_diff_eq!(t, 2.0 * (5.0f64 / 2.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn guess_for_rest_to_rest_switches_halfway() {
        let p = problem([0.0, 0.0], [1.0, 0.0], [0.0, 0.0], 1.0);
        let g = initial_guess(&p);
        assert_abs_diff_eq!(g.duration, 2.0, epsilon = 1e-12);
        // Adjoint along +x before t = 1 and along -x after.
        let psi = |t: f64| crate::trajectory::eval_adjoint(&g, t);
        assert!(psi(0.5).x > 0.0);
        assert!(psi(1.5).x < 0.0);
        assert!(psi(1.0).x.abs() < 1e-12);
        // The tilt adds a lateral drift of ∫ b/√((1-t)² + b²) dt = 2b·asinh(1/b).
        let end = eval_state(&g, &p.initial, p.u_max, g.duration).unwrap();
        let b = GUESS_TILT.tan();
        assert_abs_diff_eq!(end.vel.y, 2.0 * b * (1.0 / b).asinh(), epsilon = 1e-9);
        assert_abs_diff_eq!(end.vel.x, 0.0, epsilon = 1e-9);
        assert!((end.pos.x - 1.0).abs() < 1e-4);
    }

    #[test]
    fn guess_when_already_at_goal() {
        let g = initial_guess(&problem([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], 1.0));
        assert_eq!(g.duration, 0.0);
        assert_eq!(g.alpha(), [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn guess_duration_is_projected_1d_optimum() {
        let g = initial_guess(&problem([1.0, 0.0], [1.0, 0.0], [0.0, 0.0], 1.0));
        let oracle = bang_bang_1d(1.0, 1.0, 0.0, 1.0).total_time;
        assert_abs_diff_eq!(g.duration, oracle, epsilon = 1e-12);
        // d = 1, v0 = 1, vf = 0: brake-free peak v_p = √1.5.
        assert_abs_diff_eq!(oracle, 2.0 * 1.5f64.sqrt() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn axis_falls_back_to_velocity_change() {
        let p = problem([0.0, 1.0], [0.0, 0.0], [0.0, -1.0], 1.0);
        assert_eq!(projection_axis(&p), Vec2::new(0.0, -1.0));
    }
}
