//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use tsocs_core::{ControlParams, State, Vec2};

/// Optimal control computed straight from the adjoint line.
pub fn control(a: [f64; 4], u_max: f64, t: f64) -> [f64; 2] {
    let (x, y) = (a[0] * t + a[2], a[1] * t + a[3]);
    let n = (x * x + y * y).sqrt();
    [u_max * x / n, u_max * y / n]
}

/// Classical RK4 on `ẋ = v, v̇ = u(t)` with `steps` uniform steps.
pub fn rk4(params: &ControlParams, initial: &State, u_max: f64, t_end: f64, steps: usize) -> State {
    let a = params.alpha();
    let h = t_end / steps as f64;
    let deriv = |t: f64, s: [f64; 4]| {
        let u = control(a, u_max, t);
        [s[2], s[3], u[0], u[1]]
    };
    let mut s = [initial.pos.x, initial.pos.y, initial.vel.x, initial.vel.y];
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = deriv(t, s);
        let k2 = deriv(t + h / 2.0, add(s, k1, h / 2.0));
        let k3 = deriv(t + h / 2.0, add(s, k2, h / 2.0));
        let k4 = deriv(t + h, add(s, k3, h));
        for i in 0..4 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    State::new(Vec2::new(s[0], s[1]), Vec2::new(s[2], s[3]))
}

fn add(s: [f64; 4], d: [f64; 4], h: f64) -> [f64; 4] {
    [s[0] + h * d[0], s[1] + h * d[1], s[2] + h * d[2], s[3] + h * d[3]]
}

/// Smallest `‖ψ(t)‖ / ‖α‖` over `[0, t_end]`, by exact minimisation of the
/// quadratic `‖ψ(t)‖²`.
pub fn min_adjoint_ratio(a: [f64; 4], t_end: f64) -> f64 {
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qq = a[0] * a[0] + a[1] * a[1];
    let pq = a[0] * a[2] + a[1] * a[3];
    let t_star = if qq > 0.0 { (-pq / qq).clamp(0.0, t_end) } else { 0.0 };
    let psi = |t: f64| ((a[0] * t + a[2]).powi(2) + (a[1] * t + a[3]).powi(2)).sqrt();
    psi(t_star).min(psi(0.0)).min(psi(t_end)) / norm
}

/// Random well-conditioned parameters: the adjoint stays at least `margin`
/// (relative to `‖α‖`) away from the origin on `[0, T]`.
pub fn sample_regular_params<R: Rng>(rng: &mut R, margin: f64) -> ControlParams {
    loop {
        let a = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        let t = rng.gen_range(0.05..6.0);
        if min_adjoint_ratio(a, t) >= margin {
            return ControlParams::new(a, t);
        }
    }
}

pub fn sample_state<R: Rng>(rng: &mut R) -> State {
    State::new(
        Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
        Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
    )
}

/// Componentwise relative error with an absolute floor of `floor`.
pub fn max_rel_err(a: &State, b: &State, floor: f64) -> f64 {
    let pa = [a.pos.x, a.pos.y, a.vel.x, a.vel.y];
    let pb = [b.pos.x, b.pos.y, b.vel.x, b.vel.y];
    pa.iter()
        .zip(pb)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}
