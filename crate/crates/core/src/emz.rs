//! Effective Mori-Zwanzig decomposition: streaming matrix, memory kernel,
//! fluctuation term, their equilibria, and the generalized Langevin
//! equation they define.
//!
//! The decomposition is written for the generator `K = -A` with semigroup
//! `e^{tK}`, while every matrix here is stored accretive. The sign map used
//! throughout:
//!
//! * `⟨v_k, K v_i⟩ = -v_kᵀ A v_i`,
//! * `e^{tQKQ} = e^{-t QAQ}`,
//! * `QK v_i = -QA v_i` and `QK* v_k = -QAᵀ v_k`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::max_abs;
use crate::projection::{MoriProjection, OrthogonalGenerator};
use crate::spectral::{fit_decay, validate_grid, DecayFit, StepPropagators};

/// Increasing time grid starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        validate_grid(&times)?;
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid("time grid must start at 0".into()));
        }
        Ok(Self { times })
    }

    /// `0, dt, 2dt, …` up to and including `t_end` (rounded to whole steps).
    pub fn uniform(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end >= 0.0) || !dt.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidGrid(format!("invalid step {dt} or horizon {t_end}")));
        }
        let steps = (t_end / dt).round() as usize;
        Self::new((0..=steps).map(|k| k as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The common step if the grid is uniform to relative precision `1e-9`.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let h = self.times[1] - self.times[0];
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        uniform.then_some(h)
    }
}

/// `Ω_ij = Σ_k G⁻¹_jk ⟨v_k, K v_i⟩`.
pub fn streaming_matrix(a: &DMatrix<f64>, proj: &MoriProjection) -> Result<DMatrix<f64>> {
    check_dim(proj.dimension(), a.nrows())?;
    let v = &proj.observables;
    // M_ki = ⟨v_k, K v_i⟩.
    let m = -(v.transpose() * a * v);
    Ok(m.transpose() * proj.gram_inverse())
}

/// `QK v_i` as columns.
fn orthogonal_forcing(a: &DMatrix<f64>, proj: &MoriProjection, og: &OrthogonalGenerator) -> DMatrix<f64> {
    -(&og.q * a * &proj.observables)
}

/// `QK* v_k` as columns.
fn adjoint_forcing(a: &DMatrix<f64>, proj: &MoriProjection, og: &OrthogonalGenerator) -> DMatrix<f64> {
    -(&og.q * a.transpose() * &proj.observables)
}

/// `K_ij = Σ_k G⁻¹_jk ⟨QK* v_k, x_i⟩` for columns `x_i`.
fn kernel_from_states(adjoint: &DMatrix<f64>, states: &DMatrix<f64>, proj: &MoriProjection) -> DMatrix<f64> {
    let b = adjoint.transpose() * states;
    b.transpose() * proj.gram_inverse()
}

/// `e^{-t_k QAQ}` applied to the columns of `x0` at every grid time.
fn propagate_columns(qkq: &DMatrix<f64>, x0: &DMatrix<f64>, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    let mut props = StepPropagators::new(qkq);
    let mut out = Vec::with_capacity(grid.len());
    let mut cur = x0.clone();
    let mut t_prev = 0.0;
    for &t in grid.times() {
        let h = t - t_prev;
        if h > 0.0 {
            cur = props.get(h)? * &cur;
        }
        out.push(cur.clone());
        t_prev = t;
    }
    Ok(out)
}

/// Memory kernel `K_ij(t) = Σ_k G⁻¹_jk ⟨v_k, K e^{tQKQ} QK v_i⟩`.
pub fn memory_kernel(
    a: &DMatrix<f64>,
    proj: &MoriProjection,
    og: &OrthogonalGenerator,
    grid: &TimeGrid,
) -> Result<Vec<DMatrix<f64>>> {
    check_dim(proj.dimension(), a.nrows())?;
    let forcing = orthogonal_forcing(a, proj, og);
    let adjoint = adjoint_forcing(a, proj, og);
    Ok(propagate_columns(&og.qkq, &forcing, grid)?
        .iter()
        .map(|s| kernel_from_states(&adjoint, s, proj))
        .collect())
}

/// Fluctuation coefficients `f_i(t) = e^{tQKQ} QK v_i`, indexed
/// `[time][observable]`.
pub fn fluctuation_term(
    a: &DMatrix<f64>,
    proj: &MoriProjection,
    og: &OrthogonalGenerator,
    grid: &TimeGrid,
) -> Result<Vec<Vec<DVector<f64>>>> {
    check_dim(proj.dimension(), a.nrows())?;
    let forcing = orthogonal_forcing(a, proj, og);
    Ok(propagate_columns(&og.qkq, &forcing, grid)?
        .iter()
        .map(|s| s.column_iter().map(|c| c.into_owned()).collect())
        .collect())
}

/// `K(0)` by the direct quadratic form `⟨v_k, K Q K v_i⟩ G⁻¹`, independent
/// of the propagation path.
pub fn kernel_at_zero(a: &DMatrix<f64>, proj: &MoriProjection, og: &OrthogonalGenerator) -> DMatrix<f64> {
    let v = &proj.observables;
    let b = v.transpose() * a * &og.q * a * v;
    b.transpose() * proj.gram_inverse()
}

/// `(K_∞, f_∞)` with `K_∞,ij = Σ_k G⁻¹_jk ⟨QK* v_k, π₀^Q QK v_i⟩` and
/// `f_∞,j = π₀^Q QK v_j`.
pub fn equilibrium_limits(
    a: &DMatrix<f64>,
    proj: &MoriProjection,
    og: &OrthogonalGenerator,
) -> Result<(DMatrix<f64>, Vec<DVector<f64>>)> {
    let pi = og
        .pi0q
        .as_ref()
        .ok_or_else(|| Error::Internal("equilibrium projector has not been built".into()))?;
    let limit = pi * orthogonal_forcing(a, proj, og);
    let kernel = kernel_from_states(&adjoint_forcing(a, proj, og), &limit, proj);
    let fluct = limit.column_iter().map(|c| c.into_owned()).collect();
    Ok((kernel, fluct))
}

/// Complete decomposition on one grid.
#[derive(Debug, Clone)]
pub struct EmzDecomposition {
    pub omega: DMatrix<f64>,
    pub grid: TimeGrid,
    pub kernel_series: Vec<DMatrix<f64>>,
    pub fluct_series: Vec<Vec<DVector<f64>>>,
    pub kernel_equilibrium: DMatrix<f64>,
    pub fluct_equilibrium: Vec<DVector<f64>>,
    /// Fit of `‖K(t) - K_∞‖_max`; `None` when the kernel does not relax
    /// (it is already at equilibrium).
    pub kernel_fit: Option<DecayFit>,
    /// Fit of `max_j ‖f_j(t) - f_∞,j‖`.
    pub fluct_fit: Option<DecayFit>,
}

impl EmzDecomposition {
    pub fn compute(
        a: &DMatrix<f64>,
        proj: &MoriProjection,
        og: &OrthogonalGenerator,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let omega = streaming_matrix(a, proj)?;
        let forcing = orthogonal_forcing(a, proj, og);
        let adjoint = adjoint_forcing(a, proj, og);
        let states = propagate_columns(&og.qkq, &forcing, grid)?;
        let kernel_series: Vec<DMatrix<f64>> = states
            .iter()
            .map(|s| kernel_from_states(&adjoint, s, proj))
            .collect();
        let fluct_series: Vec<Vec<DVector<f64>>> = states
            .iter()
            .map(|s| s.column_iter().map(|c| c.into_owned()).collect())
            .collect();
        let (kernel_equilibrium, fluct_equilibrium) = equilibrium_limits(a, proj, og)?;
        let mut out = Self {
            omega,
            grid: grid.clone(),
            kernel_series,
            fluct_series,
            kernel_equilibrium,
            fluct_equilibrium,
            kernel_fit: None,
            fluct_fit: None,
        };
        // Deviations at round-off level mean there is nothing to fit.
        let kernel_dev = out.kernel_deviation();
        let kernel_scale = max_abs(&out.kernel_series[0]).max(max_abs(&out.kernel_equilibrium));
        if kernel_dev.iter().copied().fold(0.0, f64::max) > 1e-12 * kernel_scale.max(1.0) {
            out.kernel_fit = fit_decay(grid.times(), &kernel_dev);
        }
        let fluct_dev = out.fluct_deviation();
        let fluct_scale = out.fluct_series[0].iter().map(|f| f.norm()).fold(1.0, f64::max);
        if fluct_dev.iter().copied().fold(0.0, f64::max) > 1e-12 * fluct_scale {
            out.fluct_fit = fit_decay(grid.times(), &fluct_dev);
        }
        Ok(out)
    }

    /// `‖K(t_k) - K_∞‖_max`.
    pub fn kernel_deviation(&self) -> Vec<f64> {
        self.kernel_series
            .iter()
            .map(|k| max_abs(&(k - &self.kernel_equilibrium)))
            .collect()
    }

    /// `max_j ‖f_j(t_k) - f_∞,j‖`.
    pub fn fluct_deviation(&self) -> Vec<f64> {
        self.fluct_series
            .iter()
            .map(|fs| {
                fs.iter()
                    .zip(&self.fluct_equilibrium)
                    .map(|(f, e)| (f - e).norm())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn rank(&self) -> usize {
        self.omega.nrows()
    }

    /// Noise-averaged forcing projected on the observables,
    /// `G⁻¹ ⟨v, f(t)⟩`; identically zero because `f(t)` stays in `Ran Q`.
    pub fn projected_forcing(&self, proj: &MoriProjection) -> Vec<DVector<f64>> {
        self.fluct_series
            .iter()
            .map(|fs| {
                let cols = DMatrix::from_columns(fs);
                let b = proj.observables.transpose() * cols;
                DVector::from_iterator(fs.len(), (0..fs.len()).map(|i| b.column(i).sum()))
            })
            .collect()
    }
}

/// Growth of `‖q‖` beyond this factor of the initial size is divergence.
const DIVERGENCE_GROWTH: f64 = 1e6;

/// Trapezoidal scheme for `dq/dt = Ω q + ∫₀ᵗ K(t - s) q(s) ds + F(t)` on a
/// uniform grid; `kernel_series[k]` is `K(t_k)`.
pub fn solve_gle(
    omega: &DMatrix<f64>,
    kernel_series: &[DMatrix<f64>],
    grid: &TimeGrid,
    initial: &DVector<f64>,
    forcing: Option<&[DVector<f64>]>,
) -> Result<Vec<DVector<f64>>> {
    let m = omega.nrows();
    check_dim(m, initial.len())?;
    let n = grid.len();
    if kernel_series.len() < n {
        return Err(Error::InvalidGrid(format!(
            "kernel series has {} samples, grid has {n}",
            kernel_series.len()
        )));
    }
    if let Some(f) = forcing {
        if f.len() < n {
            return Err(Error::InvalidGrid(format!("forcing has {} samples, grid has {n}", f.len())));
        }
    }
    let h = match grid.uniform_step() {
        Some(h) => h,
        None if n == 1 => return Ok(vec![initial.clone()]),
        None => return Err(Error::InvalidGrid("GLE solver requires a uniform grid".into())),
    };
    let zero = DVector::zeros(m);
    let force = |k: usize| forcing.map_or(&zero, |f| &f[k]);

    let lhs = DMatrix::identity(m, m) - omega * (0.5 * h) - &kernel_series[0] * (0.25 * h * h);
    let lu = lhs.lu();
    let scale = initial.amax().max(f64::MIN_POSITIVE);
    let mut q = Vec::with_capacity(n);
    q.push(initial.clone());
    let mut g_prev = omega * initial + force(0);
    for step in 0..n - 1 {
        let next = step + 1;
        // Known part of the trapezoidal history integral at t_{next}.
        let mut hist = DVector::zeros(m);
        hist.gemv(0.5 * h, &kernel_series[next], &q[0], 0.0);
        for j in 1..=step {
            hist.gemv(h, &kernel_series[next - j], &q[j], 1.0);
        }
        let rhs = &q[step] + &g_prev * (0.5 * h) + (&hist + force(next)) * (0.5 * h);
        let q_next = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("singular implicit GLE step".into()))?;
        let growth = q_next.amax() / scale;
        if !growth.is_finite() || growth > DIVERGENCE_GROWTH {
            return Err(Error::SchemeDivergence { step: next, growth });
        }
        g_prev = omega * &q_next + hist + &kernel_series[0] * &q_next * (0.5 * h) + force(next);
        q.push(q_next);
    }
    Ok(q)
}

/// `max_ij |K(t) - K_fdt(t)|` with `K_fdt,ij = -Σ_k G⁻¹_jk ⟨f_k(0), f_i(t)⟩`,
/// the kernel a second fluctuation-dissipation relation would predict.
pub fn second_fdt_diagnostic(emz: &EmzDecomposition, proj: &MoriProjection) -> Vec<f64> {
    let f0 = DMatrix::from_columns(&emz.fluct_series[0]);
    emz.fluct_series
        .iter()
        .zip(&emz.kernel_series)
        .map(|(ft, k)| {
            let b = f0.transpose() * DMatrix::from_columns(ft);
            let k_fdt = -(b.transpose() * proj.gram_inverse());
            max_abs(&(k - k_fdt))
        })
        .collect()
}
