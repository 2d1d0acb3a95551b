//! Numerical solution of the window-averaged conditional-probability equation
//!
//! ```text
//! ∫K(s) f(w0+s) ρ(w0+s) ds / ∫K(s) ρ(w0+s) ds = (1 − cos w0) / 8
//! ```
//!
//! on a uniform periodic grid. Writing `g = f ρ` and `h = (1/4 − f) ρ`, the
//! equation says that the windowed `g` must be the fraction `t = (1 − cos w0)/2`
//! of the windowed `g + h`. Both are non-negative, so the solver runs
//! multiplicative (Richardson-Lucy type) updates of `g` and `h` towards the
//! targets `t P` and `(1 − t) P`, where `P` is the current windowed total.
//! Multiplicative updates keep the forced zeros of `g` and `h` in place and
//! never leave the box `0 ≤ f ≤ 1/4`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::kernel::{window_weights, Stencil};
use super::{single_efficiency, target_rhs, ContinuousError, ContinuousSettings, WindowWidth};
use crate::par::Execution;
use crate::types::OutcomeSign;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub delta: WindowWidth,
    pub grid_n: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverParams {
    pub const DEFAULT_GRID: usize = 1024;
    pub const DEFAULT_TOL: f64 = 1e-3;
    pub const DEFAULT_MAX_ITER: usize = 20_000;
    pub const MIN_GRID: usize = 256;

    pub fn new(delta: WindowWidth) -> Self {
        Self {
            delta,
            grid_n: Self::DEFAULT_GRID,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
        }
    }

    fn validate(&self) -> Result<(), ContinuousError> {
        if self.grid_n < Self::MIN_GRID {
            return Err(ContinuousError::InvalidParameter(format!(
                "grid size {} below {}",
                self.grid_n,
                Self::MIN_GRID
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(ContinuousError::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Solves with default execution. See [`solve_densities_with`].
pub fn solve_densities(
    delta: WindowWidth,
    grid_n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<DensitySolution, ContinuousError> {
    solve_densities_with(
        &SolverParams {
            delta,
            grid_n,
            tol,
            max_iter,
        },
        Execution::default(),
    )
}

/// Nodes whose hat function overlaps the open zero band `(0, 3Δ)`.
fn touches_zero_band(i: usize, h: f64, delta: WindowWidth) -> bool {
    (i as f64) * h < 3.0 * delta.get() + h
}

/// Nodes whose hat function overlaps the open quarter band `(π, π + 3Δ)`.
fn touches_quarter_band(i: usize, h: f64, delta: WindowWidth) -> bool {
    let w = i as f64 * h;
    w > PI - h && w < PI + 3.0 * delta.get() + h
}

/// Iterates until the grid residual drops to `params.tol`.
///
/// The result depends only on `params`: every grid sum is evaluated in a
/// fixed order, so the execution strategy does not change any bit.
pub fn solve_densities_with(
    params: &SolverParams,
    exec: Execution,
) -> Result<DensitySolution, ContinuousError> {
    params.validate()?;
    let delta = params.delta;
    let n = params.grid_n;
    let h = TAU / n as f64;
    let stencil = Stencil::new(delta, n);
    let column_sum = stencil.total_weight();
    let grid: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let share: Vec<f64> = grid.iter().map(|&w| 4.0 * target_rhs(w)).collect();

    // start from f = rhs shifted to the window centre, ρ flat
    const FLOOR: f64 = 1e-3;
    let shift = 1.5 * delta.get();
    let mut g: Vec<f64> = Vec::with_capacity(n);
    let mut hh: Vec<f64> = Vec::with_capacity(n);
    for (i, &w) in grid.iter().enumerate() {
        let t = 4.0 * target_rhs(w - shift);
        g.push(if touches_zero_band(i, h, delta) { 0.0 } else { t.max(FLOOR) });
        hh.push(if touches_quarter_band(i, h, delta) { 0.0 } else { (1.0 - t).max(FLOOR) });
    }

    let apply = |v: &[f64]| exec.map_indexed(n, |j| stencil.apply_at(v, j));
    let apply_t = |v: &[f64]| exec.map_indexed(n, |i| stencil.apply_transpose_at(v, i));

    let mut best = f64::INFINITY;
    for iteration in 0..=params.max_iter {
        let big_g = apply(&g);
        let big_h = apply(&hh);
        let mut worst = 0.0f64;
        for j in 0..n {
            let total = big_g[j] + big_h[j];
            let r = if total > 0.0 {
                (big_g[j] / (4.0 * total) - share[j] / 4.0).abs()
            } else {
                f64::INFINITY
            };
            worst = worst.max(r);
        }
        best = best.min(worst);
        if worst <= params.tol {
            let solution = DensitySolution::from_unnormalised(delta, &g, &hh, params.tol, iteration)?;
            if solution.residual() <= params.tol {
                return Ok(solution);
            }
        }
        if iteration == params.max_iter {
            break;
        }
        let mut ratio_g = vec![1.0; n];
        let mut ratio_h = vec![1.0; n];
        for j in 0..n {
            let total = big_g[j] + big_h[j];
            if big_g[j] > 0.0 {
                ratio_g[j] = share[j] * total / big_g[j];
            }
            if big_h[j] > 0.0 {
                ratio_h[j] = (1.0 - share[j]) * total / big_h[j];
            }
        }
        let back_g = apply_t(&ratio_g);
        let back_h = apply_t(&ratio_h);
        let mut mass = 0.0;
        for i in 0..n {
            g[i] *= back_g[i] / column_sum;
            hh[i] *= back_h[i] / column_sum;
            mass += g[i] + hh[i];
        }
        if !mass.is_finite() || mass <= 0.0 {
            break;
        }
        for i in 0..n {
            g[i] /= mass;
            hh[i] /= mass;
        }
    }
    Err(ContinuousError::NonConvergence {
        iterations: params.max_iter,
        best_residual: best,
    })
}

/// Grid densities `f`, `ρ` for a window width `Δ`.
///
/// Between grid nodes the products `f ρ` and `ρ` are interpolated linearly
/// (periodically), and `ρ` is normalised so that the eight regions carry total
/// mass one: `(2π)² ∫₀^{2π} ρ(w) dw = 1`.
#[derive(Debug, Clone)]
pub struct DensitySolution {
    delta: WindowWidth,
    grid: Vec<f64>,
    f: Vec<f64>,
    rho: Vec<f64>,
    f_rho: Vec<f64>,
    residual: f64,
    tol: f64,
    iterations: usize,
    stencil: Stencil,
}

impl DensitySolution {
    fn from_unnormalised(
        delta: WindowWidth,
        g: &[f64],
        hh: &[f64],
        tol: f64,
        iterations: usize,
    ) -> Result<Self, ContinuousError> {
        let n = g.len();
        let h = TAU / n as f64;
        let raw_rho: Vec<f64> = g.iter().zip(hh).map(|(a, b)| 4.0 * (a + b)).collect();
        let scale = 1.0 / (TAU * TAU * h * raw_rho.iter().sum::<f64>());
        let rho: Vec<f64> = raw_rho.iter().map(|r| r * scale).collect();
        let f: Vec<f64> = (0..n)
            .map(|i| {
                let total = g[i] + hh[i];
                if total > 0.0 {
                    (g[i] / (4.0 * total)).clamp(0.0, 0.25)
                } else {
                    band_default(i as f64 * h, delta)
                }
            })
            .collect();
        Self::from_parts(delta, f, rho, tol, iterations)
    }

    /// Builds a solution from grid values and recomputes its residual.
    pub fn from_parts(
        delta: WindowWidth,
        f: Vec<f64>,
        rho: Vec<f64>,
        tol: f64,
        iterations: usize,
    ) -> Result<Self, ContinuousError> {
        let n = f.len();
        if n < 2 || rho.len() != n {
            return Err(ContinuousError::Malformed(format!(
                "f has {} values, rho has {}",
                n,
                rho.len()
            )));
        }
        if f.iter().any(|v| !(0.0..=0.25).contains(v)) {
            return Err(ContinuousError::Malformed("f outside [0, 1/4]".into()));
        }
        if rho.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ContinuousError::Malformed("rho negative or not finite".into()));
        }
        let h = TAU / n as f64;
        let grid = (0..n).map(|i| i as f64 * h).collect();
        let f_rho = f.iter().zip(&rho).map(|(a, b)| a * b).collect();
        let mut sol = Self {
            delta,
            grid,
            f,
            rho,
            f_rho,
            residual: f64::INFINITY,
            tol,
            iterations,
            stencil: Stencil::new(delta, n),
        };
        sol.residual = sol.grid_residual();
        Ok(sol)
    }

    pub fn delta(&self) -> WindowWidth {
        self.delta
    }

    pub fn grid_n(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho
    }

    /// Max over grid nodes of `|lhs(w) − (1 − cos w)/8|`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_converged(&self) -> bool {
        self.residual <= self.tol
    }

    pub fn single_efficiency(&self) -> f64 {
        single_efficiency(self.delta)
    }

    fn spacing(&self) -> f64 {
        TAU / self.grid.len() as f64
    }

    fn interpolate(&self, values: &[f64], w: f64) -> f64 {
        let n = values.len();
        let x = w.rem_euclid(TAU) / self.spacing();
        let cell = x.floor();
        let frac = x - cell;
        let i = cell as usize % n;
        values[i] * (1.0 - frac) + values[(i + 1) % n] * frac
    }

    pub fn rho_at(&self, w: f64) -> f64 {
        self.interpolate(&self.rho, w)
    }

    pub fn f_rho_at(&self, w: f64) -> f64 {
        self.interpolate(&self.f_rho, w)
    }

    /// Grid values of `f ρ`.
    pub fn f_rho_values(&self) -> &[f64] {
        &self.f_rho
    }

    /// `(2π)² ∫ ρ`: total mass over the eight regions.
    pub fn total_measure(&self) -> f64 {
        TAU * TAU * self.spacing() * self.rho.iter().sum::<f64>()
    }

    /// Window integrals of `f ρ` and `ρ` starting at `w0`.
    fn windowed(&self, w0: f64) -> (f64, f64) {
        window_weights(self.delta, self.grid.len(), w0)
            .iter()
            .fold((0.0, 0.0), |(a, b), &(i, wt)| {
                (a + wt * self.f_rho[i], b + wt * self.rho[i])
            })
    }

    /// Left-hand side of the equation at phase sum `w0`.
    pub fn lhs_ratio(&self, w0: f64) -> Result<f64, ContinuousError> {
        let (num, den) = self.windowed(w0);
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(ContinuousError::DegenerateDensity(w0))
        }
    }

    /// The left-hand side at every grid node; `NaN` where `ρ` vanishes on the window.
    pub fn lhs_on_grid(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|j| {
                let den = self.stencil.apply_at(&self.rho, j);
                if den > 0.0 {
                    self.stencil.apply_at(&self.f_rho, j) / den
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    fn grid_residual(&self) -> f64 {
        self.lhs_on_grid()
            .iter()
            .zip(&self.grid)
            .map(|(lhs, &w)| {
                if lhs.is_nan() {
                    f64::INFINITY
                } else {
                    (lhs - target_rhs(w)).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Triple-detection probability when the phase sum is `w0`.
    pub fn triple_efficiency_at_sum(&self, w0: f64) -> f64 {
        self.windowed(w0).1
    }

    pub fn triple_efficiency(&self, settings: &ContinuousSettings) -> f64 {
        self.triple_efficiency_at_sum(settings.sum())
    }

    /// `points` samples of the triple efficiency over one period of `w`.
    pub fn triple_efficiency_curve(&self, points: usize) -> Vec<(f64, f64)> {
        (0..points)
            .map(|k| {
                let w = k as f64 * TAU / points as f64;
                (w, self.triple_efficiency_at_sum(w))
            })
            .collect()
    }

    /// `p(i, j, k | triple)` at the given settings.
    pub fn conditional_prob(
        &self,
        settings: &ContinuousSettings,
        signs: OutcomeSign,
    ) -> Result<f64, ContinuousError> {
        let w0 = settings.sum();
        let even = self.lhs_ratio(w0)?;
        Ok(if signs.product().value() > 0 { even } else { 0.25 - even })
    }

    /// Largest `f` on zero-band nodes and largest `|f − 1/4|` on quarter-band nodes.
    /// At `Δ = π/3` the closed bands share their endpoints; nodes in both are skipped.
    pub fn band_deviation(&self) -> (f64, f64) {
        let (mut zero, mut quarter) = (0.0f64, 0.0f64);
        for (w, f) in self.grid.iter().zip(&self.f) {
            let (z, q) = (in_zero_band(*w, self.delta), in_quarter_band(*w, self.delta));
            if z && q {
                continue;
            }
            if z {
                zero = zero.max(*f);
            }
            if q {
                quarter = quarter.max((f - 0.25).abs());
            }
        }
        (zero, quarter)
    }

    pub fn to_file(&self) -> SolutionFile {
        SolutionFile {
            delta: self.delta.get(),
            grid_n: self.grid.len(),
            tol: self.tol,
            iterations: self.iterations,
            residual: self.residual,
            single_efficiency: self.single_efficiency(),
            w: self.grid.clone(),
            f: self.f.clone(),
            rho: self.rho.clone(),
        }
    }

    pub fn from_file(file: SolutionFile) -> Result<Self, ContinuousError> {
        if file.f.len() != file.grid_n {
            return Err(ContinuousError::Malformed(format!(
                "grid_n = {} but {} f values",
                file.grid_n,
                file.f.len()
            )));
        }
        let delta = WindowWidth::new(file.delta)?;
        Self::from_parts(delta, file.f, file.rho, file.tol, file.iterations)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("solution serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ContinuousError> {
        let file: SolutionFile =
            serde_json::from_str(text).map_err(|e| ContinuousError::Malformed(e.to_string()))?;
        Self::from_file(file)
    }

    /// `w,f` on the grid.
    pub fn f_csv(&self) -> String {
        two_column_csv("w,f", &self.grid, &self.f)
    }

    /// `w,rho` on the grid.
    pub fn rho_csv(&self) -> String {
        two_column_csv("w,rho", &self.grid, &self.rho)
    }

    /// `w,lhs,rhs` on the grid.
    pub fn fit_csv(&self) -> String {
        let mut out = String::from("w,lhs,rhs\n");
        for (w, lhs) in self.grid.iter().zip(self.lhs_on_grid()) {
            let _ = writeln!(out, "{},{},{}", w, lhs, target_rhs(*w));
        }
        out
    }

    /// `w,p_triple` for `points` samples.
    pub fn curve_csv(&self, points: usize) -> String {
        let (w, p): (Vec<f64>, Vec<f64>) = self.triple_efficiency_curve(points).into_iter().unzip();
        two_column_csv("w,p_triple", &w, &p)
    }
}

fn two_column_csv(header: &str, a: &[f64], b: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (x, y) in a.iter().zip(b) {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// `w ∈ [0, 3Δ]` modulo 2π.
pub fn in_zero_band(w: f64, delta: WindowWidth) -> bool {
    w.rem_euclid(TAU) <= 3.0 * delta.get()
}

/// `w ∈ [π, π + 3Δ]` modulo 2π.
pub fn in_quarter_band(w: f64, delta: WindowWidth) -> bool {
    let r = w.rem_euclid(TAU);
    r >= PI && r <= PI + 3.0 * delta.get()
}

/// `f` where `ρ` is zero and the ratio is undefined.
fn band_default(w: f64, delta: WindowWidth) -> f64 {
    if in_zero_band(w, delta) {
        0.0
    } else if in_quarter_band(w, delta) {
        0.25
    } else {
        target_rhs(w - 1.5 * delta.get())
    }
}

/// On-disk form of a [`DensitySolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub delta: f64,
    pub grid_n: usize,
    pub tol: f64,
    pub iterations: usize,
    pub residual: f64,
    pub single_efficiency: f64,
    pub w: Vec<f64>,
    pub f: Vec<f64>,
    pub rho: Vec<f64>,
}
