//! Spectra of accretive Galerkin matrices, cusp diagnostics and semigroup
//! decay estimates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, expm, max_abs, operator_norm};

/// Full complex spectrum, sorted by real part then imaginary part.
pub fn eigen_decompose(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    linalg::eigenvalues(matrix)
}

/// Spectrum together with unit right eigenvectors.
pub fn eigen_decompose_with_vectors(matrix: &DMatrix<f64>) -> Result<(Vec<Complex64>, Vec<DVector<Complex64>>)> {
    let values = linalg::eigenvalues(matrix)?;
    let vectors = values
        .iter()
        .map(|&l| linalg::eigenvector(matrix, l))
        .collect::<Result<Vec<_>>>()?;
    Ok((values, vectors))
}

/// Default real/imaginary tolerances `1e-6 · max(1, ‖A‖_max)`.
pub fn default_tolerances(matrix: &DMatrix<f64>) -> (f64, f64) {
    let t = 1e-6 * max_abs(matrix).max(1.0);
    (t, t)
}

/// Least-squares slope of `log|Im λ|` against `log(1 + Re λ)` over the
/// upper envelope of the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CuspEnvelope {
    pub exponent: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub n_points: usize,
}

/// Exponential fit `r(t) ≤ C e^{-α t}` of a decay curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub constant: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex64>,
    /// Smallest real part among eigenvalues not counted as zero.
    pub spectral_gap: Option<f64>,
    pub zero_multiplicity: usize,
    #[serde(serialize_with = "serialize_complex")]
    pub imaginary_axis_violations: Vec<Complex64>,
    /// Most negative real part (zero if none is negative).
    pub min_real_part: f64,
    pub cusp_envelope: Option<CuspEnvelope>,
    pub decay_fit: Option<DecayFit>,
}

fn serialize_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

impl SpectrumReport {
    /// Eigenvalues with real part below `-re_tol`.
    pub fn accretivity_violations(&self, re_tol: f64) -> Vec<Complex64> {
        self.eigenvalues.iter().copied().filter(|z| z.re < -re_tol).collect()
    }
}

/// Diagnostics of an accretive spectrum: zeros, gap, imaginary-axis
/// intersections and the cusp envelope exponent.
pub fn cusp_diagnostic(eigs: &[Complex64], re_tol: f64, im_tol: f64) -> SpectrumReport {
    let zero_multiplicity = eigs.iter().filter(|z| z.norm() <= re_tol).count();
    let nonzero: Vec<Complex64> = eigs.iter().copied().filter(|z| z.norm() > re_tol).collect();
    let spectral_gap = nonzero.iter().map(|z| z.re).reduce(f64::min);
    let imaginary_axis_violations = nonzero
        .iter()
        .copied()
        .filter(|z| z.re <= re_tol && z.im.abs() > im_tol)
        .collect();
    let min_real_part = eigs.iter().map(|z| z.re).fold(0.0, f64::min);
    SpectrumReport {
        eigenvalues: eigs.to_vec(),
        spectral_gap,
        zero_multiplicity,
        imaginary_axis_violations,
        min_real_part,
        cusp_envelope: envelope_exponent(&nonzero, im_tol),
        decay_fit: None,
    }
}

fn envelope_exponent(nonzero: &[Complex64], im_tol: f64) -> Option<CuspEnvelope> {
    let complex: Vec<Complex64> = nonzero
        .iter()
        .copied()
        .filter(|z| z.im.abs() > im_tol && z.re > 0.0)
        .collect();
    if complex.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = complex.iter().map(|z| (1.0 + z.re).ln()).collect();
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let n_bins = (complex.len() / 2).clamp(3, 12);
    let width = (hi - lo) / n_bins as f64;
    if !(width > 0.0) {
        return None;
    }
    let mut best: Vec<Option<(f64, f64)>> = vec![None; n_bins];
    for (z, &x) in complex.iter().zip(&xs) {
        let b = (((x - lo) / width) as usize).min(n_bins - 1);
        let y = z.im.abs().ln();
        if best[b].map_or(true, |(_, yb)| y > yb) {
            best[b] = Some((x, y));
        }
    }
    let pts: Vec<(f64, f64)> = best.into_iter().flatten().collect();
    let (slope, intercept, rms) = least_squares(&pts)?;
    Some(CuspEnvelope {
        exponent: slope,
        intercept,
        residual_rms: rms,
        n_points: pts.len(),
    })
}

/// Slope, intercept and RMS residual of the line through `pts`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some((slope, intercept, rms))
}

/// Fits the asymptotic rate of a non-negative decay curve.
///
/// Oscillating curves are replaced by their tail supremum
/// `env(t) = max_{s ≥ t} r(s)` and `log env` is fitted where it lies between
/// `1e-10` and `1e-2` of its initial value. The constant is the smallest `C`
/// with `env(t) ≤ C e^{-α t}` up to the end of the window. Returns `None` for
/// curves that vanish identically or decay too little to fit.
pub fn fit_decay(times: &[f64], values: &[f64]) -> Option<DecayFit> {
    fit_decay_window(times, values, 1e-10, 1e-2)
}

/// [`fit_decay`] with explicit relative window bounds `lower < upper`.
pub fn fit_decay_window(times: &[f64], values: &[f64], lower: f64, upper: f64) -> Option<DecayFit> {
    let n = times.len().min(values.len());
    if n < 3 {
        return None;
    }
    let mut env = vec![0.0; n];
    let mut running = 0.0f64;
    for k in (0..n).rev() {
        running = running.max(values[k].abs());
        env[k] = running;
    }
    let e0 = env[0];
    if !(e0 > 0.0) || !e0.is_finite() {
        return None;
    }
    let select = |upper: f64, lower: f64| -> Vec<usize> {
        (0..n)
            .filter(|&k| env[k] <= upper * e0 && env[k] >= lower * e0 && env[k] > 0.0)
            .collect()
    };
    let mut idx = select(upper, lower);
    if idx.len() < 4 {
        idx = select(1.0, lower);
    }
    if idx.len() < 3 {
        return None;
    }
    let pts: Vec<(f64, f64)> = idx.iter().map(|&k| (times[k], env[k].ln())).collect();
    let (slope, _, _) = least_squares(&pts)?;
    let rate = -slope;
    let last = *idx.last().unwrap();
    let constant = (0..=last)
        .map(|k| env[k] * (rate * times[k]).exp())
        .fold(0.0, f64::max);
    Some(DecayFit {
        rate,
        constant,
        window: (times[idx[0]], times[last]),
        n_points: idx.len(),
    })
}

/// Propagator cache `e^{-hA}` keyed by step length.
pub(crate) struct StepPropagators {
    a: DMatrix<f64>,
    cache: Vec<(f64, DMatrix<f64>)>,
}

impl StepPropagators {
    pub fn new(a: &DMatrix<f64>) -> Self {
        Self {
            a: a.clone(),
            cache: Vec::new(),
        }
    }

    pub fn get(&mut self, h: f64) -> Result<&DMatrix<f64>> {
        let pos = self
            .cache
            .iter()
            .position(|(s, _)| (s - h).abs() <= 1e-12 * h.abs().max(1.0));
        let i = match pos {
            Some(i) => i,
            None => {
                let e = expm(&(&self.a * (-h)))?;
                self.cache.push((h, e));
                self.cache.len() - 1
            }
        };
        Ok(&self.cache[i].1)
    }
}

/// `e^{-t_k A} u` for every grid time (the grid must be non-decreasing).
pub fn propagate(a: &DMatrix<f64>, u: &DVector<f64>, times: &[f64]) -> Result<Vec<DVector<f64>>> {
    check_dim(a.nrows(), u.len())?;
    validate_grid(times)?;
    let mut props = StepPropagators::new(a);
    let mut out = Vec::with_capacity(times.len());
    let mut cur = u.clone();
    let mut t_prev = 0.0;
    for &t in times {
        let h = t - t_prev;
        if h > 0.0 {
            cur = props.get(h)? * &cur;
        }
        out.push(cur.clone());
        t_prev = t;
    }
    Ok(out)
}

pub(crate) fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidGrid("times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Decay curve `r(t) = ‖e^{-tA}u₀ - Πu₀‖` with its exponential fit.
#[derive(Debug, Clone, Serialize)]
pub struct SemigroupDecay {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `None` when `u₀` lies in the range of `Π` (nothing decays).
    pub fit: Option<DecayFit>,
    pub degenerate: bool,
}

impl SemigroupDecay {
    /// Whether the fitted rate reaches `factor · gap`.
    pub fn rate_at_least(&self, gap: f64, factor: f64) -> Option<bool> {
        self.fit.as_ref().map(|f| f.rate >= factor * gap)
    }
}

pub fn semigroup_decay(
    a: &DMatrix<f64>,
    stationary_projector: &DMatrix<f64>,
    u0: &DVector<f64>,
    times: &[f64],
) -> Result<SemigroupDecay> {
    check_dim(a.nrows(), stationary_projector.nrows())?;
    let limit = stationary_projector * u0;
    let states = propagate(a, u0, times)?;
    let residuals: Vec<f64> = states.iter().map(|s| (s - &limit).norm()).collect();
    let scale = u0.norm();
    let degenerate = scale == 0.0 || (u0 - &limit).norm() <= 1e-14 * scale;
    let fit = if degenerate {
        None
    } else {
        fit_decay(times, &residuals).map(|mut f| {
            f.constant /= scale;
            f
        })
    };
    Ok(SemigroupDecay {
        times: times.to_vec(),
        residuals,
        fit,
        degenerate,
    })
}

/// One row of the derivative-bound check
/// `‖e^{-tA} Aⁿ u₀‖ ≤ ‖e^{-tA/n} A‖ⁿ ‖u₀‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmultiplicativityRow {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Natural logs of both sides, valid even when the sides overflow.
    pub log_lhs: f64,
    pub log_rhs: f64,
}

pub fn submultiplicativity_check(
    a: &DMatrix<f64>,
    u0: &DVector<f64>,
    t: f64,
    n_max: usize,
) -> Result<Vec<SubmultiplicativityRow>> {
    check_dim(a.nrows(), u0.len())?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if n_max == 0 || n_max > 8 {
        return Err(Error::InvalidArgument(format!("n_max must be in 1..=8, got {n_max}")));
    }
    let u_norm = u0.norm();
    if u_norm == 0.0 {
        return Err(Error::InvalidArgument("initial vector is zero".into()));
    }
    let e_t = expm(&(a * (-t)))?;
    // Aⁿ u₀ kept as a unit vector times exp(log_scale).
    let mut w = u0 / u_norm;
    let mut log_scale = u_norm.ln();
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        w = a * &w;
        let wn = w.norm();
        if wn == 0.0 {
            log_scale = f64::NEG_INFINITY;
        } else {
            w /= wn;
            log_scale += wn.ln();
        }
        let log_lhs = if log_scale.is_finite() {
            (&e_t * &w).norm().ln() + log_scale
        } else {
            f64::NEG_INFINITY
        };
        let m = expm(&(a * (-t / n as f64)))? * a;
        let norm = operator_norm(&m, u0, 50, 20_000);
        let log_rhs = n as f64 * norm.ln() + u_norm.ln();
        rows.push(SubmultiplicativityRow {
            n,
            lhs: log_lhs.exp(),
            rhs: log_rhs.exp(),
            ratio: (log_lhs - log_rhs).exp(),
            log_lhs,
            log_rhs,
        });
    }
    Ok(rows)
}

/// Largest distance from each of the `k` smallest (by modulus) eigenvalues
/// of `coarse` to the nearest eigenvalue of `fine`.
pub fn refinement_shift(coarse: &[Complex64], fine: &[Complex64], k: usize) -> f64 {
    let mut sorted = coarse.to_vec();
    sorted.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal));
    sorted
        .iter()
        .take(k)
        .map(|z| fine.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn real_spectrum_diagnostics() {
        let eigs: Vec<_> = (0..10).map(|k| c(k as f64, 0.0)).collect();
        let r = cusp_diagnostic(&eigs, 1e-6, 1e-6);
        assert_eq!(r.zero_multiplicity, 1);
        assert!(r.imaginary_axis_violations.is_empty());
        assert_eq!(r.spectral_gap, Some(1.0));
        assert!(r.cusp_envelope.is_none());
    }

    #[test]
    fn imaginary_axis_flagged() {
        let r = cusp_diagnostic(&[c(0.0, 0.0), c(0.0, 1.0)], 1e-6, 1e-6);
        assert_eq!(r.imaginary_axis_violations, vec![c(0.0, 1.0)]);
    }

    #[test]
    fn envelope_slope_recovered() {
        let eigs: Vec<_> = (1..40)
            .flat_map(|k| {
                let re = k as f64;
                let im = 0.5 * (1.0 + re).powf(1.5);
                [c(re, im), c(re, -im), c(re, 0.3 * im)]
            })
            .collect();
        let env = cusp_diagnostic(&eigs, 1e-6, 1e-6).cusp_envelope.unwrap();
        assert!((env.exponent - 1.5).abs() < 1e-10);
    }

    #[test]
    fn fit_exact_exponential() {
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.1).collect();
        let r: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let f = fit_decay(&t, &r).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-10);
        assert!((f.constant - 3.0).abs() < 1e-8);
    }

    #[test]
    fn fit_oscillating_curve() {
        let t: Vec<f64> = (0..600).map(|k| k as f64 * 0.05).collect();
        let r: Vec<f64> = t.iter().map(|t| ((-t).exp() * (3.0 * t).cos()).abs()).collect();
        let f = fit_decay(&t, &r).unwrap();
        assert!((f.rate - 1.0).abs() < 0.05, "{}", f.rate);
        assert!(t.iter().zip(&r).all(|(t, r)| *r <= f.constant * (-f.rate * t).exp() * (1.0 + 1e-12) || *t > f.window.1));
    }

    #[test]
    fn fit_zero_curve_is_none() {
        assert!(fit_decay(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn diagonal_saturates_submultiplicativity() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]));
        let mut u = DVector::zeros(4);
        u[2] = 1.0;
        for row in submultiplicativity_check(&a, &u, 1.0, 6).unwrap() {
            assert!((row.ratio - 1.0).abs() < 1e-10, "{row:?}");
        }
    }

    #[test]
    fn rotation_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = eigen_decompose(&m).unwrap();
        assert!((e[0] - c(0.0, -1.0)).norm() < 1e-14 && (e[1] - c(0.0, 1.0)).norm() < 1e-14);
    }
}
