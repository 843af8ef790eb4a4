//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;

/// `{n λ₊ + k λ₋}` for the harmonic Kramers operator, with `λ±` the roots
/// of `λ² - (γ/μ) λ + 1/μ = 0` (unit spring constant and temperature).
pub fn kramers_spectrum(gamma: f64, mass: f64, max_level: usize) -> Vec<Complex64> {
    let b = gamma / mass;
    let disc = Complex64::new(b * b - 4.0 / mass, 0.0).sqrt();
    let lp = (Complex64::new(b, 0.0) + disc) / 2.0;
    let lm = (Complex64::new(b, 0.0) - disc) / 2.0;
    let mut out = Vec::new();
    for n in 0..=max_level {
        for k in 0..=max_level - n {
            out.push(lp * n as f64 + lm * k as f64);
        }
    }
    out.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    out
}

/// Distance from `z` to the nearest element of `set`.
pub fn nearest(z: Complex64, set: &[Complex64]) -> f64 {
    set.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min)
}

/// The `k` entries of `values` smallest in modulus.
pub fn smallest_by_modulus(values: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    v.truncate(k);
    v
}

/// Adaptive Simpson quadrature on `[a, b]`, started from 64 panels so that
/// narrow peaks are not missed by the first coarse estimate.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| simpson_panel(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol / panels as f64))
        .sum()
}

fn simpson_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Probabilists' Hermite polynomial `He_n(x)` by its explicit sum.
pub fn hermite_he(n: usize, x: f64) -> f64 {
    let mut s = 0.0;
    for m in 0..=n / 2 {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let coef = factorial(n) / (factorial(m) * factorial(n - 2 * m)) / 2f64.powi(m as i32);
        s += sign * coef * x.powi((n - 2 * m) as i32);
    }
    s
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Moments `∫ q^k e^{-βV} dq / Z` of a Gibbs marginal by adaptive Simpson.
pub fn gibbs_moment(v: &dyn Fn(f64) -> f64, beta: f64, k: i32, lo: f64, hi: f64) -> f64 {
    let z = simpson(&|q| (-beta * v(q)).exp(), lo, hi, 1e-14);
    simpson(&|q| q.powi(k) * (-beta * v(q)).exp(), lo, hi, 1e-14) / z
}
