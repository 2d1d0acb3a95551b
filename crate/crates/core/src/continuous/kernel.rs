//! Window kernel and the quadratures built on it.
//!
//! For any `g`, the integral of `g(x + y + z)` over the cube
//! `[α, α+Δ] × [β, β+Δ] × [γ, γ+Δ]` equals `∫₀^{3Δ} K(s) g(w₀ + s) ds` with
//! `w₀ = α + β + γ`, where `K` is the three-fold self-convolution of the
//! indicator of `[0, Δ]`.

use std::f64::consts::TAU;

use super::WindowWidth;

/// `K(s)`: piecewise quadratic on `[0, 3Δ]`, zero elsewhere.
pub fn window_kernel(s: f64, delta: WindowWidth) -> f64 {
    let d = delta.get();
    if s <= 0.0 || s >= 3.0 * d {
        0.0
    } else if s <= d {
        0.5 * s * s
    } else if s <= 2.0 * d {
        0.5 * (-2.0 * s * s + 6.0 * d * s - 3.0 * d * d)
    } else {
        let r = 3.0 * d - s;
        0.5 * r * r
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// `∫₀^{3Δ} K(s) g(w0 + s) ds` with `order`-point Gauss-Legendre on each of
/// the three polynomial pieces of `K`.
pub fn kernel_integral<G: Fn(f64) -> f64>(delta: WindowWidth, w0: f64, g: G, order: usize) -> f64 {
    let d = delta.get();
    let rule = gauss_legendre(order);
    let mut total = 0.0;
    for piece in 0..3 {
        let (a, b) = (piece as f64 * d, (piece + 1) as f64 * d);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, wt) in &rule {
            let s = mid + half * x;
            total += wt * half * window_kernel(s, delta) * g(w0 + s);
        }
    }
    total
}

// 3-point rule: exact for the cubic `K × hat` products on each sub-piece.
const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Weights `W_i` such that `Σ W_i F_i = ∫₀^{3Δ} K(s) F(w0 + s) ds` for the
/// periodic piecewise-linear interpolant `F` of grid values `F_i` on the
/// uniform `n`-point grid over `[0, 2π)`. Exact up to rounding.
pub fn window_weights(delta: WindowWidth, n: usize, w0: f64) -> Vec<(usize, f64)> {
    let d = delta.get();
    let h = TAU / n as f64;
    let start = w0.rem_euclid(TAU);
    let end = start + 3.0 * d;
    let first_cell = (start / h).floor() as usize;
    let last_cell = (end / h).floor() as usize;
    let mut acc = vec![0.0; last_cell - first_cell + 2];
    let kernel_breaks = [start + d, start + 2.0 * d];
    for cell in first_cell..=last_cell {
        let lo = start.max(cell as f64 * h);
        let hi = end.min((cell + 1) as f64 * h);
        if hi <= lo {
            continue;
        }
        let mut cuts = vec![lo];
        cuts.extend(kernel_breaks.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for &(x, wt) in &GL3 {
                let u = mid + half * x;
                let kv = window_kernel(u - start, delta) * wt * half;
                let frac = u / h - cell as f64;
                let local = cell - first_cell;
                acc[local] += kv * (1.0 - frac);
                acc[local + 1] += kv * frac;
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, w)| *w != 0.0)
        .map(|(k, w)| ((first_cell + k) % n, w))
        .collect()
}

/// Window weights for every grid node, stored once as offsets from the node.
#[derive(Debug, Clone)]
pub struct Stencil {
    n: usize,
    taps: Vec<(usize, f64)>,
}

impl Stencil {
    pub fn new(delta: WindowWidth, n: usize) -> Self {
        Self {
            n,
            taps: window_weights(delta, n, 0.0),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sum of all tap weights (`≈ Δ³`).
    pub fn total_weight(&self) -> f64 {
        self.taps.iter().map(|(_, w)| w).sum()
    }

    /// `(W v)_j = Σ_k w_k v[j + k]`: the window integral starting at node `j`.
    pub fn apply_at(&self, v: &[f64], j: usize) -> f64 {
        self.taps
            .iter()
            .map(|&(k, w)| w * v[(j + k) % self.n])
            .sum()
    }

    /// `(Wᵀ r)_i = Σ_k w_k r[i - k]`.
    pub fn apply_transpose_at(&self, r: &[f64], i: usize) -> f64 {
        self.taps
            .iter()
            .map(|&(k, w)| w * r[(i + self.n - k % self.n) % self.n])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dw(d: f64) -> WindowWidth {
        WindowWidth::new(d).unwrap()
    }

    #[test]
    fn kernel_anchor_values() {
        let d = dw(0.9 * PI / 3.0);
        assert_eq!(window_kernel(0.0, d), 0.0);
        assert_eq!(window_kernel(3.0 * d.get(), d), 0.0);
        let mid = window_kernel(1.5 * d.get(), d);
        assert!((mid - 0.75 * d.get() * d.get()).abs() < 1e-15);
        let total = kernel_integral(d, 0.0, |_| 1.0, 8);
        assert!((total - d.get().powi(3)).abs() < 1e-12);
    }

    #[test]
    fn kernel_matches_numerical_convolution() {
        // convolve the indicator of [0, Δ] with itself twice on a fine grid
        let delta = 0.7;
        let m = 2000usize;
        let step = delta / m as f64;
        let box1 = vec![1.0; m];
        let conv = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y * step;
                }
            }
            out
        };
        let two = conv(&box1, &box1);
        let three = conv(&two, &box1);
        let d = dw(delta);
        for frac in [0.25, 0.5, 1.0, 1.5, 2.2, 2.9] {
            let s = frac * delta;
            // sample k of the triple sum sits at s = (k + 1.5) step
            let idx = (s / step - 1.5).round() as usize;
            let numeric = three[idx];
            assert!(
                (numeric - window_kernel(s, d)).abs() < 5e-3 * delta * delta,
                "s={s}: {numeric} vs {}",
                window_kernel(s, d)
            );
        }
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        for n in 1..12 {
            let rule = gauss_legendre(n);
            let sum: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((sum - 2.0).abs() < 1e-13, "order {n}");
            let deg = 2 * n - 1;
            let integral: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((integral - exact).abs() < 1e-13, "order {n}");
        }
        let g3 = gauss_legendre(3);
        for (a, b) in g3.iter().zip(GL3.iter()) {
            assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
        }
    }

    #[test]
    fn window_weights_integrate_linear_functions() {
        let d = dw(0.5);
        let n = 300;
        let h = TAU / n as f64;
        for w0 in [0.0, 0.123, 2.0, 6.1, -0.4] {
            let w = window_weights(d, n, w0);
            let total: f64 = w.iter().map(|(_, x)| x).sum();
            assert!((total - 0.125).abs() < 1e-14);
            // a linear function without wrap: F(u) = u on the unwrapped stretch
            let start = f64::rem_euclid(w0, TAU);
            let first = (start / h).floor() as usize;
            let lin: f64 = w
                .iter()
                .map(|&(i, x)| {
                    let k = (i + n - first % n) % n;
                    x * (first + k) as f64 * h
                })
                .sum();
            let exact = kernel_integral(d, start, |u| u, 6);
            assert!((lin - exact).abs() < 1e-13, "w0={w0}: {lin} vs {exact}");
        }
    }

    #[test]
    fn stencil_matches_fresh_weights_on_grid() {
        let d = dw(0.9 * PI / 3.0);
        let n = 512;
        let st = Stencil::new(d, n);
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 2.0).collect();
        for j in [0, 7, 300, 511] {
            let fresh: f64 = window_weights(d, n, j as f64 * TAU / n as f64)
                .iter()
                .map(|&(i, w)| w * v[i])
                .sum();
            assert!((st.apply_at(&v, j) - fresh).abs() < 1e-13);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let d = dw(0.3);
        let n = 256;
        let st = Stencil::new(d, n);
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.07).sin()).collect();
        let lhs: f64 = (0..n).map(|j| v[j] * st.apply_at(&u, j)).sum();
        let rhs: f64 = (0..n).map(|i| u[i] * st.apply_transpose_at(&v, i)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
