#![allow(dead_code)]

use nalgebra::{Complex, Matrix2, RowVector2, Vector2};

/// Exact two-pulse echo of one telegraph perturber class.
///
/// States are (down, up). The mean of `exp(iφ)` is
/// `p0 · exp((Q + i a D) τ) · exp((Q − i a D) τ) · 1` with `a = 2π·shift`,
/// `D = diag(0, 1)` and `Q` the generator; perturbers are independent, so
/// `count` of them raise the modulus to that power.
pub fn telegraph_echo(rate: f64, p_up: f64, shift: f64, count: usize, t12: f64) -> f64 {
    let k_up = rate * p_up;
    let k_down = rate * (1.0 - p_up);
    let c = |x: f64| Complex::new(x, 0.0);
    let a = 2.0 * std::f64::consts::PI * shift;
    let q = Matrix2::new(c(-k_up), c(k_up), c(k_down), c(-k_down));
    let d = Matrix2::new(c(0.0), c(0.0), c(0.0), Complex::new(0.0, a));
    let before = ((q + d) * c(t12)).exp();
    let after = ((q - d) * c(t12)).exp();
    let p0 = RowVector2::new(c(1.0 - p_up), c(p_up));
    let one = Vector2::new(c(1.0), c(1.0));
    let chi = (p0 * before * after * one)[(0, 0)];
    chi.norm_sqr().powi(count as i32)
}

/// Midpoint Riemann sum of `f` over `[a, b]` with `n` cells.
pub fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    // pairwise-free Kahan summation keeps 1e7 terms accurate
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..n {
        let y = f(a + (i as f64 + 0.5) * h) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum * h
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
