//! Hidden-variable samplers for the two source types.

use std::f64::consts::TAU;

use num_integer::Integer;
use rand::Rng;

use super::SimError;
use crate::continuous::{DensitySolution, SignRegion, WindowWidth};
use crate::discrete::DiscreteModel;
use crate::types::{HiddenTuple, Sign, Station};

/// Draws tuples with probability equal to their rational weights.
///
/// Weights are brought to a common denominator so the draw is a single
/// uniform integer, with no floating-point rounding of the weights.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    tuples: Vec<HiddenTuple>,
    cumulative: Vec<u64>,
}

impl DiscreteSampler {
    pub fn new(model: &DiscreteModel) -> Result<Self, SimError> {
        let lcm = model
            .weights()
            .iter()
            .fold(1i64, |acc, w| acc.lcm(w.denom()));
        let mut cumulative = Vec::with_capacity(model.len());
        let mut total: u64 = 0;
        for w in model.weights() {
            let scaled = w.numer() * (lcm / w.denom());
            let scaled = u64::try_from(scaled)
                .map_err(|_| SimError::InvalidConfig(format!("negative weight {w}")))?;
            total = total
                .checked_add(scaled)
                .ok_or_else(|| SimError::InvalidConfig("weight denominators too large".into()))?;
            cumulative.push(total);
        }
        if total == 0 {
            return Err(SimError::InvalidConfig("model has zero total weight".into()));
        }
        Ok(Self {
            tuples: model.tuples().to_vec(),
            cumulative,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HiddenTuple {
        let total = *self.cumulative.last().expect("non-empty by construction");
        let u = rng.random_range(0..total);
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.tuples[idx]
    }

    pub fn tuples(&self) -> &[HiddenTuple] {
        &self.tuples
    }
}

/// A point of the continuum hidden-variable space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenPoint {
    pub region: SignRegion,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl HiddenPoint {
    pub fn coordinate(&self, station: Station) -> f64 {
        match station {
            Station::A => self.x,
            Station::B => self.y,
            Station::C => self.z,
        }
    }

    pub fn sign(&self, station: Station) -> Sign {
        self.region.signs.as_array()[station.index()]
    }

    /// `w = x + y + z` mod 2π.
    pub fn phase_sum(&self) -> f64 {
        (self.x + self.y + self.z).rem_euclid(TAU)
    }
}

/// Samples the continuum model defined by a converged density solution.
///
/// The marginal of `w` has density proportional to the interpolated `ρ`,
/// so `w` is drawn by inverting its piecewise-quadratic distribution
/// function; `x`, `y` are uniform and `z` closes the sum. Given `w`, an
/// even-parity region is chosen with probability `4 f ρ / ρ`, then one of
/// its four members uniformly.
#[derive(Debug, Clone)]
pub struct ContinuousSampler {
    delta: WindowWidth,
    rho: Vec<f64>,
    f_rho: Vec<f64>,
    cumulative: Vec<f64>,
    spacing: f64,
    even: [SignRegion; 4],
    odd: [SignRegion; 4],
}

impl ContinuousSampler {
    pub fn new(solution: &DensitySolution) -> Result<Self, SimError> {
        if !solution.is_converged() {
            return Err(SimError::NotConverged {
                residual: solution.residual(),
                tol: solution.tol(),
            });
        }
        let rho = solution.rho_values().to_vec();
        let n = rho.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            acc += 0.5 * (rho[i] + rho[(i + 1) % n]);
            cumulative.push(acc);
        }
        if acc.is_nan() || acc <= 0.0 {
            return Err(SimError::InvalidConfig("density solution has zero mass".into()));
        }
        Ok(Self {
            delta: solution.delta(),
            rho,
            f_rho: solution.f_rho_values().to_vec(),
            cumulative,
            spacing: TAU / n as f64,
            even: SignRegion::with_parity(Sign::Plus),
            odd: SignRegion::with_parity(Sign::Minus),
        })
    }

    pub fn delta(&self) -> WindowWidth {
        self.delta
    }

    /// Draws `w` from the interpolated `ρ`; also returns the cell and offset.
    fn sample_phase_sum<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let n = self.rho.len();
        let total = self.cumulative[n - 1];
        let u = rng.random::<f64>() * total;
        let cell = self.cumulative.partition_point(|&c| c <= u).min(n - 1);
        let before = if cell == 0 { 0.0 } else { self.cumulative[cell - 1] };
        let mass = self.cumulative[cell] - before;
        let v = if mass > 0.0 {
            ((u - before) / mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        (cell, invert_linear_cdf(self.rho[cell], self.rho[(cell + 1) % n], v))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HiddenPoint {
        let n = self.rho.len();
        let (cell, t) = self.sample_phase_sum(rng);
        let w = ((cell as f64 + t) * self.spacing).rem_euclid(TAU);
        let next = (cell + 1) % n;
        let rho = self.rho[cell] * (1.0 - t) + self.rho[next] * t;
        let f_rho = self.f_rho[cell] * (1.0 - t) + self.f_rho[next] * t;
        let p_even = if rho > 0.0 {
            (4.0 * f_rho / rho).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let even = rng.random::<f64>() < p_even;
        let pick = rng.random_range(0..4usize);
        let region = if even { self.even[pick] } else { self.odd[pick] };
        let x = rng.random::<f64>() * TAU;
        let y = rng.random::<f64>() * TAU;
        let z = (w - x - y).rem_euclid(TAU);
        HiddenPoint { region, x, y, z }
    }
}

/// Quantile `t ∈ [0, 1]` of the density `a (1 − t) + b t` at probability `v`:
/// the root of `((b − a)/2) t² + a t = v (a + b)/2`, in a cancellation-free form.
fn invert_linear_cdf(a: f64, b: f64, v: f64) -> f64 {
    let root = (a * a + v * (b * b - a * a)).max(0.0).sqrt();
    if a + root > 0.0 {
        (v * (a + b) / (a + root)).clamp(0.0, 1.0)
    } else {
        v
    }
}

/// The hidden-variable source of an experiment.
#[derive(Debug, Clone)]
pub enum Source {
    Discrete(DiscreteSampler),
    Continuous(ContinuousSampler),
}

/// One sampled hidden variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hidden {
    Tuple(HiddenTuple),
    Point(HiddenPoint),
}

impl Source {
    pub fn discrete(model: &DiscreteModel) -> Result<Self, SimError> {
        DiscreteSampler::new(model).map(Source::Discrete)
    }

    pub fn continuous(solution: &DensitySolution) -> Result<Self, SimError> {
        ContinuousSampler::new(solution).map(Source::Continuous)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Source::Discrete(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Hidden {
        match self {
            Source::Discrete(s) => Hidden::Tuple(s.sample(rng)),
            Source::Continuous(s) => Hidden::Point(s.sample(rng)),
        }
    }
}
