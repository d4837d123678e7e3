use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Coefficients of the adjoint line `ψ(t) = (α₁t + α₃, α₂t + α₄)` together
/// with the trajectory duration.
///
/// The control only depends on the direction of `ψ`, so the four `α` are
/// defined up to a positive scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    /// Total time `T` in seconds.
    pub duration: f64,
}

impl ControlParams {
    pub const fn new(alpha: [f64; 4], duration: f64) -> Self {
        Self {
            alpha1: alpha[0],
            alpha2: alpha[1],
            alpha3: alpha[2],
            alpha4: alpha[3],
            duration,
        }
    }

    /// Builds parameters from the line `ψ(t) = intercept + slope·t`.
    pub fn from_line(slope: Vec2, intercept: Vec2, duration: f64) -> Self {
        Self::new([slope.x, slope.y, intercept.x, intercept.y], duration)
    }

    pub fn alpha(&self) -> [f64; 4] {
        [self.alpha1, self.alpha2, self.alpha3, self.alpha4]
    }

    /// `(α₁, α₂)`, the rate of change of the adjoint.
    pub fn slope(&self) -> Vec2 {
        Vec2::new(self.alpha1, self.alpha2)
    }

    /// `(α₃, α₄)`, the adjoint at `t = 0`.
    pub fn intercept(&self) -> Vec2 {
        Vec2::new(self.alpha3, self.alpha4)
    }

    pub fn with_alpha(&self, alpha: [f64; 4]) -> Self {
        Self::new(alpha, self.duration)
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        Self { duration, ..*self }
    }

    pub fn alpha_norm(&self) -> f64 {
        self.alpha().iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Rescales `α` to unit norm. The trajectory is unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.alpha_norm();
        if n > 0.0 && n.is_finite() {
            self.with_alpha(self.alpha().map(|a| a / n))
        } else {
            *self
        }
    }

    /// Moves the adjoint origin forward by `dt` along the line and shortens
    /// the horizon accordingly.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            alpha3: self.alpha3 + self.alpha1 * dt,
            alpha4: self.alpha4 + self.alpha2 * dt,
            duration: self.duration - dt,
            ..*self
        }
    }

    /// Parameter vector `(α₁, α₂, α₃, α₄, T)`.
    pub fn to_vector(&self) -> [f64; 5] {
        [self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.duration]
    }

    pub fn from_vector(v: [f64; 5]) -> Self {
        Self::new([v[0], v[1], v[2], v[3]], v[4])
    }

    /// Rejects non-finite values and the all-zero adjoint.
    pub fn check(&self) -> Result<()> {
        let alpha = self.alpha();
        if alpha.iter().any(|a| !a.is_finite()) || alpha.iter().all(|a| a.abs() < DEGENERATE_ALPHA) {
            return Err(Error::DegenerateParams(alpha));
        }
        Ok(())
    }
}

/// Adjoint coefficients below this magnitude (all four) are treated as zero.
pub const DEGENERATE_ALPHA: f64 = 1e-300;
