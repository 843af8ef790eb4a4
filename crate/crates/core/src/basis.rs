//! Orthonormal polynomial bases of weighted `L²` spaces and the Gauss rules
//! used for every inner product and Galerkin matrix element.
//!
//! A basis is described by the three-term recurrence
//! `b_{k+1} φ_{k+1}(x) = (x - a_k) φ_k(x) - b_k φ_{k-1}(x)` with `φ_0 = 1`
//! (the weight is normalized to unit mass). Coefficients are known in closed
//! form for Gaussian weights and are computed by the discretized Stieltjes
//! procedure for general log-densities.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scalar log-density, shared between threads.
pub type LogWeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which density the basis is orthonormal against.
#[derive(Clone)]
pub enum WeightDescriptor {
    /// Centered Gaussian with the given standard deviation.
    Gaussian { scale: f64 },
    /// `exp(log_weight)` normalized on `support`.
    LogDensity {
        log_weight: LogWeightFn,
        support: (f64, f64),
    },
}

impl fmt::Debug for WeightDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightDescriptor::Gaussian { scale } => {
                f.debug_struct("Gaussian").field("scale", scale).finish()
            }
            WeightDescriptor::LogDensity { support, .. } => {
                f.debug_struct("LogDensity").field("support", support).finish()
            }
        }
    }
}

/// One-dimensional orthonormal polynomial basis `φ_0, …, φ_{N-1}`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    size: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    weight: WeightDescriptor,
}

/// Nodes and positive weights of a Gauss rule for one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub axis: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ f dρ` approximated by the rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn with_axis(mut self, axis: usize) -> Self {
        self.axis = axis;
        self
    }
}

/// Values and derivatives of all basis functions at one point.
#[derive(Debug, Clone)]
pub struct BasisValues {
    pub value: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Gaussian basis: probabilists' Hermite polynomials rescaled to standard
/// deviation `scale` and normalized, `φ_k(x) = He_k(x/s)/√k!`.
pub fn build_hermite_basis(scale: f64, size: usize) -> Result<OrthonormalBasis> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Hermite scale must be positive, got {scale}"
        )));
    }
    if size < 2 {
        return Err(Error::InvalidArgument(format!(
            "basis size must be at least 2, got {size}"
        )));
    }
    let depth = 4 * size + 16;
    let alpha = vec![0.0; depth];
    let beta = (0..depth)
        .map(|k| if k == 0 { 1.0 } else { scale * (k as f64).sqrt() })
        .collect();
    Ok(OrthonormalBasis {
        size,
        alpha,
        beta,
        weight: WeightDescriptor::Gaussian { scale },
    })
}

/// Basis for the density proportional to `exp(log_weight)` by the Stieltjes
/// procedure on an oversampled Fejér (Chebyshev-point) rule over `support`.
pub fn build_weighted_basis(
    log_weight: LogWeightFn,
    size: usize,
    support: (f64, f64),
) -> Result<OrthonormalBasis> {
    build_weighted_basis_with_depth(log_weight, size, support, 3 * size + 8)
}

/// As [`build_weighted_basis`], with an explicit recurrence depth (the
/// largest Gauss rule that can later be requested).
pub fn build_weighted_basis_with_depth(
    log_weight: LogWeightFn,
    size: usize,
    support: (f64, f64),
    depth: usize,
) -> Result<OrthonormalBasis> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!(
            "basis size must be at least 2, got {size}"
        )));
    }
    let (lo, hi) = support;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "support hint must be a finite interval, got [{lo}, {hi}]"
        )));
    }
    let depth = depth.max(size + 1);
    let n_points = (8 * depth).max(1024);

    let measure = DiscreteMeasure::new(&*log_weight, lo, hi, n_points)?;
    // Mass must be converged on the hint: doubling the interval may not add
    // appreciable weight.
    let mid = 0.5 * (lo + hi);
    let half = hi - lo;
    let wide = DiscreteMeasure::new(&*log_weight, mid - half, mid + half, 2 * n_points);
    let converged = match &wide {
        Ok(wide) => {
            let ratio = (wide.log_mass - measure.log_mass).exp();
            ratio.is_finite() && (ratio - 1.0).abs() <= 1e-8
        }
        Err(_) => false,
    };
    if !converged {
        return Err(Error::NonNormalizableWeight(format!(
            "weight mass does not converge on [{lo}, {hi}] under domain refinement"
        )));
    }

    let (alpha, beta) = stieltjes(&measure.nodes, &measure.weights, depth);
    Ok(OrthonormalBasis {
        size,
        alpha,
        beta,
        weight: WeightDescriptor::LogDensity { log_weight, support },
    })
}

/// Gauss rule with `n_nodes` nodes from the Jacobi matrix of the recurrence.
pub fn gauss_quadrature(basis: &OrthonormalBasis, n_nodes: usize) -> Result<QuadratureRule> {
    let available = basis.depth();
    if n_nodes == 0 || n_nodes > available {
        return Err(Error::InsufficientRecurrence {
            requested: n_nodes,
            available,
        });
    }
    let mut jacobi = DMatrix::zeros(n_nodes, n_nodes);
    for k in 0..n_nodes {
        jacobi[(k, k)] = basis.alpha[k];
        if k + 1 < n_nodes {
            jacobi[(k, k + 1)] = basis.beta[k + 1];
            jacobi[(k + 1, k)] = basis.beta[k + 1];
        }
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    // Christoffel weights 1 / Σ_{k<n} φ_k(x)², accurate also for tiny weights.
    let weights = nodes
        .iter()
        .map(|&x| {
            let v = basis.eval_upto(x, n_nodes);
            1.0 / v.iter().map(|p| p * p).sum::<f64>()
        })
        .collect();
    Ok(QuadratureRule {
        nodes,
        weights,
        axis: 0,
    })
}

/// Coefficients `c_k = Σ_j w_j f(x_j) φ_k(x_j)`.
pub fn project_function(
    f: impl Fn(f64) -> f64,
    basis: &OrthonormalBasis,
    quad: &QuadratureRule,
) -> Result<DVector<f64>> {
    let mut c = DVector::zeros(basis.size());
    for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "function is not finite at quadrature node {x}"
            )));
        }
        let phi = basis.eval(x);
        for k in 0..basis.size() {
            c[k] += w * fx * phi[k];
        }
    }
    Ok(c)
}

impl OrthonormalBasis {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of recurrence coefficients available (largest Gauss rule).
    pub fn depth(&self) -> usize {
        self.alpha.len()
    }

    pub fn weight(&self) -> &WeightDescriptor {
        &self.weight
    }

    /// `(a_k, b_k)` for `k < depth`; `b_0` is the (unit) mass.
    pub fn recurrence(&self) -> (&[f64], &[f64]) {
        (&self.alpha, &self.beta)
    }

    /// Norms of the monic orthogonal polynomials, `b_1 b_2 ⋯ b_k`.
    pub fn normalization_constants(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size);
        let mut acc = 1.0;
        for k in 0..self.size {
            if k > 0 {
                acc *= self.beta[k];
            }
            out.push(acc);
        }
        out
    }

    /// Same weight, different number of basis functions.
    pub fn resized(&self, size: usize) -> Result<Self> {
        if size < 2 || size >= self.depth() {
            return Err(Error::InvalidArgument(format!(
                "cannot resize basis to {size} (recurrence depth {})",
                self.depth()
            )));
        }
        Ok(Self {
            size,
            ..self.clone()
        })
    }

    /// `φ_0(x), …, φ_{N-1}(x)`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.eval_upto(x, self.size)
    }

    fn eval_upto(&self, x: f64, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        if n > 1 {
            v[1] = (x - self.alpha[0]) / self.beta[1];
        }
        for k in 1..n.saturating_sub(1) {
            v[k + 1] = ((x - self.alpha[k]) * v[k] - self.beta[k] * v[k - 1]) / self.beta[k + 1];
        }
        v
    }

    /// Values with first and second derivatives.
    pub fn eval_with_derivatives(&self, x: f64) -> BasisValues {
        let n = self.size;
        let mut p = vec![0.0; n];
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        p[0] = 1.0;
        for k in 0..n - 1 {
            let (pm, d1m, d2m) = if k == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (p[k - 1], d1[k - 1], d2[k - 1])
            };
            let bk = if k == 0 { 0.0 } else { self.beta[k] };
            let shift = x - self.alpha[k];
            let inv = 1.0 / self.beta[k + 1];
            p[k + 1] = (shift * p[k] - bk * pm) * inv;
            d1[k + 1] = (p[k] + shift * d1[k] - bk * d1m) * inv;
            d2[k + 1] = (2.0 * d1[k] + shift * d2[k] - bk * d2m) * inv;
        }
        BasisValues {
            value: p,
            first: d1,
            second: d2,
        }
    }

    /// `Σ_k c_k φ_k(x)`.
    pub fn reconstruct(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        self.eval(x)
            .iter()
            .zip(coeffs.iter())
            .map(|(p, c)| p * c)
            .sum()
    }

    /// Gram matrix `⟨φ_j, φ_k⟩` under `quad`.
    pub fn gram(&self, quad: &QuadratureRule) -> DMatrix<f64> {
        let n = self.size;
        let mut g = DMatrix::zeros(n, n);
        for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
            let v = self.eval(x);
            for j in 0..n {
                for k in 0..n {
                    g[(j, k)] += w * v[j] * v[k];
                }
            }
        }
        g
    }

    /// Log-density of the (unnormalized) weight at `x`.
    pub fn log_weight(&self, x: f64) -> f64 {
        match &self.weight {
            WeightDescriptor::Gaussian { scale } => -0.5 * (x / scale).powi(2),
            WeightDescriptor::LogDensity { log_weight, .. } => log_weight(x),
        }
    }
}

/// Two-axis tensor-product basis; the flat index of `(i, j)` is
/// `i * n_second + j`.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    pub first: Arc<OrthonormalBasis>,
    pub second: Arc<OrthonormalBasis>,
}

impl TensorBasis {
    pub fn new(first: OrthonormalBasis, second: OrthonormalBasis) -> Self {
        Self {
            first: Arc::new(first),
            second: Arc::new(second),
        }
    }

    pub fn dimension(&self) -> usize {
        self.first.size() * self.second.size()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.second.size() + j
    }

    /// Coefficients of `f(x, y)` by tensor Gauss quadrature.
    pub fn project(
        &self,
        f: impl Fn(f64, f64) -> f64,
        quad_first: &QuadratureRule,
        quad_second: &QuadratureRule,
    ) -> Result<DVector<f64>> {
        let n1 = self.first.size();
        let n2 = self.second.size();
        let phi2: Vec<Vec<f64>> = quad_second.nodes.iter().map(|&y| self.second.eval(y)).collect();
        let mut c = DVector::zeros(n1 * n2);
        for (&x, &wx) in quad_first.nodes.iter().zip(&quad_first.weights) {
            let phi1 = self.first.eval(x);
            for (b, (&y, &wy)) in quad_second.nodes.iter().zip(&quad_second.weights).enumerate() {
                let fxy = f(x, y);
                if !fxy.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "function is not finite at quadrature node ({x}, {y})"
                    )));
                }
                let w = wx * wy * fxy;
                for i in 0..n1 {
                    let wi = w * phi1[i];
                    for j in 0..n2 {
                        c[i * n2 + j] += wi * phi2[b][j];
                    }
                }
            }
        }
        Ok(c)
    }

    /// `Σ c_{ij} φ_i(x) ψ_j(y)`.
    pub fn reconstruct(&self, coeffs: &DVector<f64>, x: f64, y: f64) -> f64 {
        let a = self.first.eval(x);
        let b = self.second.eval(y);
        let n2 = b.len();
        let mut s = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                s += coeffs[i * n2 + j] * ai * bj;
            }
        }
        s
    }
}

/// Normalized discrete measure `Σ w_j δ_{x_j}` approximating the weight.
struct DiscreteMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `log` of the unnormalized mass.
    log_mass: f64,
}

impl DiscreteMeasure {
    fn new(log_weight: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let (ref_nodes, ref_weights) = fejer_rule(n);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let nodes: Vec<f64> = ref_nodes.iter().map(|t| mid + half * t).collect();
        let logs: Vec<f64> = nodes.iter().map(|&x| log_weight(x)).collect();
        if logs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::NonNormalizableWeight(
                "log-weight is not finite on the support hint".into(),
            ));
        }
        let lmax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lmax.is_finite() {
            return Err(Error::NonNormalizableWeight(
                "weight vanishes on the support hint".into(),
            ));
        }
        let mut weights: Vec<f64> = logs
            .iter()
            .zip(&ref_weights)
            .map(|(l, w)| w * half * (l - lmax).exp())
            .collect();
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NonNormalizableWeight("zero or non-finite mass".into()));
        }
        for w in &mut weights {
            *w /= mass;
        }
        Ok(Self {
            nodes,
            weights,
            log_mass: mass.ln() + lmax,
        })
    }
}

/// Fejér's first rule on `[-1, 1]` (Chebyshev points of the first kind).
fn fejer_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for j in 0..n {
        let theta = (2 * j + 1) as f64 * PI / (2 * n) as f64;
        let mut s = 0.0;
        for k in 1..=n / 2 {
            let kf = k as f64;
            s += (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
        }
        nodes.push(theta.cos());
        weights.push(2.0 / n as f64 * (1.0 - 2.0 * s));
    }
    (nodes, weights)
}

/// Discretized Stieltjes procedure for the orthonormal recurrence.
fn stieltjes(nodes: &[f64], weights: &[f64], depth: usize) -> (Vec<f64>, Vec<f64>) {
    let m = nodes.len();
    let mut alpha = vec![0.0; depth];
    let mut beta = vec![0.0; depth];
    beta[0] = 1.0;
    let mut prev = vec![0.0; m];
    let mut cur = vec![1.0; m];
    for k in 0..depth {
        alpha[k] = (0..m).map(|j| weights[j] * nodes[j] * cur[j] * cur[j]).sum();
        if k + 1 == depth {
            break;
        }
        let bk = if k == 0 { 0.0 } else { beta[k] };
        let next: Vec<f64> = (0..m)
            .map(|j| (nodes[j] - alpha[k]) * cur[j] - bk * prev[j])
            .collect();
        let norm: f64 = (0..m).map(|j| weights[j] * next[j] * next[j]).sum::<f64>().sqrt();
        beta[k + 1] = norm;
        prev = cur;
        cur = next.into_iter().map(|v| v / norm).collect();
    }
    (alpha, beta)
}
