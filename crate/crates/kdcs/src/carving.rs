//! Randomized ball carving.
//!
//! A carving draws a perturbed center `c ~ N(0, R²·I/d)` and a radius
//! `r ~ U[0, 3R]`, then classifies shell-centered points against the sphere
//! `‖x − c‖ = r` with a safety margin `αR/√d` on each side. Points inside the
//! margin band are `Boundary`: queries landing there abort instead of risking
//! a misclassification.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::core::dist;
use crate::{Error, Result};

/// Default constant in the boundary half-width derivation.
pub const DEFAULT_C1: f64 = 0.1;

/// Outcome of evaluating the carving hash at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashValue {
    /// `‖x − c‖ ≤ r − αR/√d`.
    Inside,
    /// `‖x − c‖ > r + αR/√d`.
    Outside,
    /// Within the margin band around the sphere.
    Boundary,
}

impl HashValue {
    /// Numeric value of a decisive outcome: 0 for inside, 1 for outside.
    pub fn bit(self) -> Option<u8> {
        match self {
            HashValue::Inside => Some(0),
            HashValue::Outside => Some(1),
            HashValue::Boundary => None,
        }
    }
}

/// Boundary half-width parameter `α = c₁ / (4·max(ln n, 1)·max(ln Φ, 1))²`,
/// clamped to `(1e-6, 1/4)`, unless overridden.
pub fn alpha_for(n: usize, phi: f64, c1: f64, override_alpha: Option<f64>) -> f64 {
    if let Some(a) = override_alpha {
        return a;
    }
    let ln_n = (n as f64).ln().max(1.0);
    let ln_phi = phi.ln().max(1.0);
    let denom = 4.0 * ln_n * ln_phi;
    (c1 / (denom * denom)).clamp(1e-6, 0.25)
}

/// A sampled carving for a ball of radius `R`, in shell-centered coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CarvingParams {
    /// Perturbed carving center `c ~ N(0, R²·I/d)`.
    pub center: Vec<f64>,
    /// Carving radius `r ~ U[0, 3R]`.
    pub r: f64,
    /// Radius of the ball being carved.
    pub big_r: f64,
    /// Boundary half-width parameter.
    pub alpha: f64,
}

impl CarvingParams {
    /// Draws a fresh carving.
    pub fn sample<G: Rng>(dim: usize, big_r: f64, alpha: f64, rng: &mut G) -> Result<Self> {
        if !(big_r > 0.0 && big_r.is_finite()) {
            return Err(Error::InvalidParameter(format!("carving needs R > 0, got {big_r}")));
        }
        if !(alpha > 0.0 && alpha < 0.25) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1/4), got {alpha}"
            )));
        }
        let normal = Normal::new(0.0, big_r / (dim as f64).sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let center: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let r = rng.random_range(0.0..3.0 * big_r);
        Ok(CarvingParams { center, r, big_r, alpha })
    }

    /// The margin half-width `αR/√d`.
    pub fn margin(&self) -> f64 {
        self.alpha * self.big_r / (self.center.len() as f64).sqrt()
    }

    /// Classifies a shell-centered point.
    pub fn eval(&self, x: &[f64]) -> HashValue {
        let d = dist(x, &self.center);
        let m = self.margin();
        if d <= self.r - m {
            HashValue::Inside
        } else if d > self.r + m {
            HashValue::Outside
        } else {
            HashValue::Boundary
        }
    }
}
