//! Continuum prism model.
//!
//! The hidden-variable space is eight copies `G^{ijk}` of the torus
//! `[0, 2π)³`. Regions with an even number of minus signs carry density
//! `f(w) ρ(w)`, the others `(1/4 − f(w)) ρ(w)`, where `w = x + y + z mod 2π`.
//! Station A fires at setting `α` iff `x ∈ [α, α + Δ]` (mod 2π), with the
//! sign taken from the region label; likewise for B with `y` and C with `z`.

pub mod kernel;
mod solver;

use std::f64::consts::{FRAC_PI_3, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{OutcomeSign, Sign};

pub use kernel::{kernel_integral, window_kernel, window_weights, Stencil};
pub use solver::{
    solve_densities, solve_densities_with, DensitySolution, SolutionFile, SolverParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuousError {
    #[error("window width {0} outside (0, pi/3]: the forced bands would overlap")]
    WindowTooWide(f64),
    #[error("window width must be positive, got {0}")]
    WindowNotPositive(f64),
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(String),
    #[error("solver did not converge in {iterations} iterations (best residual {best_residual:e})")]
    NonConvergence { iterations: usize, best_residual: f64 },
    #[error("window integral of rho vanishes at w = {0}")]
    DegenerateDensity(f64),
    #[error("solution residual {residual:e} exceeds its tolerance {tol:e}")]
    NotConverged { residual: f64, tol: f64 },
    #[error("malformed solution: {0}")]
    Malformed(String),
}

/// Window width `Δ`, constrained to `0 < Δ ≤ π/3`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct WindowWidth(f64);

impl WindowWidth {
    pub fn new(delta: f64) -> Result<Self, ContinuousError> {
        if delta.is_nan() || delta <= 0.0 {
            return Err(ContinuousError::WindowNotPositive(delta));
        }
        if delta > FRAC_PI_3 {
            return Err(ContinuousError::WindowTooWide(delta));
        }
        Ok(Self(delta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for WindowWidth {
    type Error = ContinuousError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<WindowWidth> for f64 {
    fn from(w: WindowWidth) -> f64 {
        w.0
    }
}

/// Phase settings `(α, β, γ)`, each reduced modulo 2π.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ContinuousSettings {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha: alpha.rem_euclid(TAU),
            beta: beta.rem_euclid(TAU),
            gamma: gamma.rem_euclid(TAU),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// `α + β + γ` mod 2π, summed in sorted order so that every permutation
    /// of the three angles gives the same bits.
    pub fn sum(&self) -> f64 {
        let mut a = self.as_array();
        a.sort_by(f64::total_cmp);
        (a[0] + a[1] + a[2]).rem_euclid(TAU)
    }
}

/// One of the eight regions `G^{ijk}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignRegion {
    pub signs: OutcomeSign,
}

impl SignRegion {
    pub fn new(signs: OutcomeSign) -> Self {
        Self { signs }
    }

    /// Product of the three signs.
    pub fn parity(&self) -> Sign {
        self.signs.product()
    }

    /// Even number of minus signs: the region carries `f ρ`.
    pub fn is_even(&self) -> bool {
        self.parity() == Sign::Plus
    }

    pub fn all() -> [SignRegion; 8] {
        OutcomeSign::all().map(SignRegion::new)
    }

    /// Regions of a given parity, in `OutcomeSign::all` order.
    pub fn with_parity(parity: Sign) -> [SignRegion; 4] {
        let mut out = [SignRegion::new(OutcomeSign::all()[0]); 4];
        let mut n = 0;
        for r in Self::all() {
            if r.parity() == parity {
                out[n] = r;
                n += 1;
            }
        }
        out
    }
}

/// Required conditional probability of `+++`: `(1 − cos w) / 8`.
pub fn target_rhs(w: f64) -> f64 {
    (1.0 - w.cos()) / 8.0
}

/// Quantum value `(1 − ijk cos w) / 8` under the offset convention of the model.
pub fn target_conditional(w: f64, signs: OutcomeSign) -> f64 {
    (1.0 - signs.product().value() as f64 * w.cos()) / 8.0
}

/// Single-station detection efficiency `ω = Δ / 2π`.
pub fn single_efficiency(delta: WindowWidth) -> f64 {
    delta.get() / TAU
}

/// Whether `coordinate` lies in the window `[start, start + Δ]` modulo 2π.
pub fn in_window(coordinate: f64, start: f64, delta: WindowWidth) -> bool {
    (coordinate - start).rem_euclid(TAU) <= delta.get()
}
