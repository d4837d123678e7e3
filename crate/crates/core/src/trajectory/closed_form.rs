//! Closed-form evaluation of the time-optimal control and the resulting
//! trajectory.
//!
//! With `p = (α₃, α₄)` and `Q = (α₁, α₂)` the adjoint is `ψ(s) = p + Q s` and
//! the control is `u(s) = u_max ψ(s)/‖ψ(s)‖`. Writing `ψ` in the orthonormal
//! frame `(Q̂, Q̂⊥)` gives `ψ(s) = w(s) Q̂ + b Q̂⊥` with `w(s) = p·Q̂ + ‖Q‖s` and
//! the constant offset `b = p·Q̂⊥`, which makes both integrals elementary:
//!
//! ```text
//! ∫ u·Q̂  ds = (h(t) - h(0)) / ‖Q‖
//! ∫ u·Q̂⊥ ds = b ln γ / ‖Q‖,      γ = (w(t) + h(t)) / (w(0) + h(0)),   h = ‖ψ‖
//! ```
//!
//! The position follows from one more integration. All logarithms are
//! formed without subtracting nearly equal quantities: `w + h` is evaluated as
//! `b² / (h - w)` when `w < 0`, and `ln γ` through `ln_1p`.
//!
//! When the adjoint direction barely turns over `[0, t]` (`‖Q‖t` small
//! relative to `‖ψ‖`) the closed form loses digits to cancellation; there the
//! integrand is analytic with distant complex singularities and an 8-point
//! Gauss-Legendre rule reproduces it to machine precision. When `b` vanishes the
//! adjoint line crosses the origin and the control is bang-bang along `Q̂`.

use crate::error::{Error, Result};
use crate::geometry::{State, Vec2};

use super::params::ControlParams;

/// Below this ratio of `‖Q‖t` to `max ‖ψ‖` the quadrature branch is used.
const QUADRATURE_RATIO: f64 = 0.2;

/// Relative adjoint magnitude under which the control direction is undefined.
const SINGULAR_RELATIVE: f64 = 1e-12;

/// Evaluates `(ψ₃(t), ψ₄(t)) = (α₁t + α₃, α₂t + α₄)`.
pub fn eval_adjoint(params: &ControlParams, t: f64) -> Vec2 {
    params.intercept() + params.slope() * t
}

/// The optimal control at time `t`: magnitude `u_max`, pointing at the adjoint.
pub fn eval_control(params: &ControlParams, u_max: f64, t: f64) -> Result<Vec2> {
    params.check()?;
    let psi = eval_adjoint(params, t);
    let n = psi.norm();
    let scale = params.intercept().norm() + params.slope().norm() * t.abs();
    if !(n > SINGULAR_RELATIVE * scale) || n == 0.0 {
        return Err(Error::SingularAdjoint { t });
    }
    Ok(psi * (u_max / n))
}

/// Integrated control effect over `[0, t]` for `u_max = 1`:
/// `velocity = ∫₀ᵗ û ds`, `position = ∫₀ᵗ (t - s) û ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Integrals {
    pub velocity: Vec2,
    pub position: Vec2,
}

/// Position and velocity at time `t` when starting from `initial`.
pub fn eval_state(params: &ControlParams, initial: &State, u_max: f64, t: f64) -> Result<State> {
    params.check()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidTime(t));
    }
    if t == 0.0 {
        return Ok(*initial);
    }
    let i = integrals(params.intercept(), params.slope(), t);
    Ok(State {
        pos: initial.pos + initial.vel * t + i.position * u_max,
        vel: initial.vel + i.velocity * u_max,
    })
}

pub(crate) fn integrals(p: Vec2, q_vec: Vec2, t: f64) -> Integrals {
    let q = q_vec.norm();
    let h0 = p.norm();
    let h1 = (p + q_vec * t).norm();
    let reach = h0.max(h1);
    if q * t < QUADRATURE_RATIO * reach {
        return quadrature(p, q_vec, t);
    }

    let axis = q_vec / q;
    let normal = axis.perp();
    let w0 = p.dot(axis);
    let w1 = w0 + q * t;
    let b = p.dot(normal);
    let b2 = b * b;

    // w + h, evaluated without cancellation for negative w.
    let lift = |w: f64, h: f64| if w >= 0.0 { h + w } else { b2 / (h - w) };
    let f0 = lift(w0, h0);
    let f1 = lift(w1, h1);
    if b2 == 0.0 || f0 == 0.0 || f1 == 0.0 {
        return bang_bang(w0, q, t, axis);
    }

    let h_sum = h1 + h0;
    let ln_gamma = (q * t * (f1 + f0) / (h_sum * f0)).ln_1p();
    let dh = q * t * (w1 + w0) / h_sum;

    let vel_axis = t * (w1 + w0) / h_sum;
    let vel_normal = b * ln_gamma / q;
    let pos_axis = 0.5 * (w1 * h1 - w0 * h0 + b2 * ln_gamma) / (q * q) - h0 * t / q;
    let pos_normal = b * (w1 * ln_gamma - dh) / (q * q);

    Integrals {
        velocity: axis * vel_axis + normal * vel_normal,
        position: axis * pos_axis + normal * pos_normal,
    }
}

/// Adjoint line through the origin: `û = sign(w(s)) Q̂`, switching at `w = 0`.
fn bang_bang(w0: f64, q: f64, t: f64, axis: Vec2) -> Integrals {
    let switch = (-w0 / q).clamp(0.0, t);
    let after = t - switch;
    let vel = after - switch;
    let pos = 0.5 * after * after - (t * switch - 0.5 * switch * switch);
    Integrals {
        velocity: axis * vel,
        position: axis * pos,
    }
}

const GAUSS_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn quadrature(p: Vec2, q_vec: Vec2, t: f64) -> Integrals {
    let half = 0.5 * t;
    let mut velocity = Vec2::ZERO;
    let mut position = Vec2::ZERO;
    for (node, weight) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
        for s in [half * (1.0 - node), half * (1.0 + node)] {
            let psi = p + q_vec * s;
            let u = psi / psi.norm();
            velocity += u * weight;
            position += u * (weight * (t - s));
        }
    }
    Integrals {
        velocity: velocity * half,
        position: position * half,
    }
}
