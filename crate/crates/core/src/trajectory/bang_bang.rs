//! Time-optimal control of the 1D double integrator.

use serde::{Deserialize, Serialize};

/// Two-phase profile: `sign·u_max` on `[0, switch_time)`, then `-sign·u_max`
/// until `total_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BangBang1d {
    pub switch_time: f64,
    pub total_time: f64,
    pub initial_sign: f64,
}

impl BangBang1d {
    /// Acceleration applied at time `t` (after `total_time` the profile is idle).
    pub fn acceleration(&self, u_max: f64, t: f64) -> f64 {
        if t < self.switch_time {
            self.initial_sign * u_max
        } else if t < self.total_time {
            -self.initial_sign * u_max
        } else {
            0.0
        }
    }

    /// Position offset and velocity after executing the profile for `t` seconds
    /// from velocity `v0`.
    pub fn state_at(&self, v0: f64, u_max: f64, t: f64) -> (f64, f64) {
        let t1 = t.clamp(0.0, self.switch_time);
        let a1 = self.initial_sign * u_max;
        let mut x = v0 * t1 + 0.5 * a1 * t1 * t1;
        let mut v = v0 + a1 * t1;
        let t2 = (t.min(self.total_time) - self.switch_time).max(0.0);
        x += v * t2 - 0.5 * a1 * t2 * t2;
        v -= a1 * t2;
        let coast = (t - self.total_time).max(0.0);
        x += v * coast;
        (x, v)
    }
}

/// Minimum-time profile moving `displacement` from velocity `v0` to `vf`.
///
/// For an initial sign `s` the peak velocity satisfies
/// `v_p² = s·u·d + (v0² + vf²)/2`; the profile is feasible when `v_p` is
/// reachable from both `v0` and `vf` in the directions prescribed by `s`.
pub fn bang_bang_1d(displacement: f64, v0: f64, vf: f64, u_max: f64) -> BangBang1d {
    let mean_sq = 0.5 * (v0 * v0 + vf * vf);
    let mut best: Option<BangBang1d> = None;
    for sign in [1.0f64, -1.0] {
        let peak_sq = sign * u_max * displacement + mean_sq;
        if peak_sq < 0.0 {
            continue;
        }
        let peak = sign * peak_sq.sqrt();
        // Phase durations; tiny negative values are rounding noise.
        let t1 = sign * (peak - v0) / u_max;
        let t2 = sign * (peak - vf) / u_max;
        let slack = 1e-12 * (1.0 + (v0.abs() + vf.abs()) / u_max);
        if t1 < -slack || t2 < -slack {
            continue;
        }
        let (t1, t2) = (t1.max(0.0), t2.max(0.0));
        let candidate = BangBang1d {
            switch_time: t1,
            total_time: t1 + t2,
            initial_sign: sign,
        };
        if best.map_or(true, |b| candidate.total_time < b.total_time) {
            best = Some(candidate);
        }
    }
    // One of the two signs is always feasible; the fallback only guards
    // against NaN inputs.
    best.unwrap_or(BangBang1d {
        switch_time: 0.0,
        total_time: 0.0,
        initial_sign: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_rest_to_rest() {
        let b = bang_bang_1d(1.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(b.switch_time, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.total_time, 2.0, epsilon = 1e-15);
        assert_eq!(b.initial_sign, 1.0);
    }

    #[test]
    fn nothing_to_do() {
        let b = bang_bang_1d(0.0, 0.0, 0.0, 1.0);
        assert_eq!(b.switch_time, 0.0);
        assert_eq!(b.total_time, 0.0);
        assert_eq!(b.initial_sign.abs(), 1.0);
    }

    #[test]
    fn single_phase_acceleration() {
        // ½t² = 0.5 reaches v = 1 at t = 1 with no deceleration phase.
        let b = bang_bang_1d(0.5, 0.0, 1.0, 1.0);
        assert_abs_diff_eq!(b.total_time, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.switch_time, 1.0, epsilon = 1e-12);
        assert_eq!(b.initial_sign, 1.0);
        let (x, v) = b.state_at(0.0, 1.0, b.total_time);
        assert_abs_diff_eq!(x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn overshoot_requires_reversal() {
        // Moving at 1 m/s toward a goal 0.1 m away that must be reached at rest.
        let b = bang_bang_1d(0.1, 1.0, 0.0, 1.0);
        assert_eq!(b.initial_sign, -1.0);
        let (x, v) = b.state_at(1.0, 1.0, b.total_time);
        assert_abs_diff_eq!(x, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    /// Smallest grid time whose best two-phase profile reaches the target.
    fn grid_search_time(d: f64, v0: f64, vf: f64, u: f64) -> f64 {
        let steps = 4000;
        let t_hi = 20.0;
        for k in 1..=steps {
            let total = t_hi * k as f64 / steps as f64;
            // Velocity constraint fixes the switch time for each sign; check
            // whether the reached displacement brackets the target.
            for sign in [1.0, -1.0] {
                let t1 = 0.5 * (total + sign * (vf - v0) / u);
                if !(0.0..=total).contains(&t1) {
                    continue;
                }
                let b = BangBang1d { switch_time: t1, total_time: total, initial_sign: sign };
                let (x, _) = b.state_at(v0, u, total);
                if (x - d).abs() <= (v0.abs() + vf.abs() + u * total) * t_hi / steps as f64 {
                    return total;
                }
            }
        }
        f64::INFINITY
    }

    #[test]
    fn matches_grid_search_oracle() {
        for &(d, v0, vf) in &[(1.0, 1.0, 0.0), (-2.0, 0.5, 0.3), (3.0, -1.0, 1.5), (0.2, 2.0, 2.0)] {
            let b = bang_bang_1d(d, v0, vf, 1.0);
            let oracle = grid_search_time(d, v0, vf, 1.0);
            assert!((b.total_time - oracle).abs() < 0.02, "{d} {v0} {vf}: {} vs {oracle}", b.total_time);
        }
    }

    proptest! {
        #[test]
        fn profile_reaches_target(d in -10.0..10.0f64, v0 in -3.0..3.0f64, vf in -3.0..3.0f64, u in 0.2..4.0f64) {
            let b = bang_bang_1d(d, v0, vf, u);
            prop_assert!(b.switch_time >= 0.0 && b.switch_time <= b.total_time);
            let (x, v) = b.state_at(v0, u, b.total_time);
            prop_assert!((x - d).abs() < 1e-9 * (1.0 + d.abs()), "x {x} d {d}");
            prop_assert!((v - vf).abs() < 1e-9 * (1.0 + vf.abs()), "v {v} vf {vf}");
        }
    }
}
