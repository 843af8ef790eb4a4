//! Galerkin matrices of backward Kolmogorov operators.
//!
//! Assembly works in the accretive convention `A = -K` (the semigroup is
//! `e^{-tA}`); the generator convention is available through
//! [`GeneratorMatrix::with_convention`].

mod ladder;
mod model;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::{gauss_quadrature, OrthonormalBasis, QuadratureRule, TensorBasis};
use crate::error::{check_dim, Error, Result};

pub use ladder::{assemble_ladder_form, LadderForm};
pub use model::{ou_stationary_scale, LangevinModel, Polynomial, ScalarFn, SdeModel};

/// Space the coefficient matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// `L²(ρ_eq)`.
    Weighted,
    /// `L²(dx)` after conjugation by `√ρ_eq`.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// Entries of `K`; semigroup `e^{tK}`.
    Generator,
    /// Entries of `-K`; semigroup `e^{-tA}`.
    Accretive,
}

#[derive(Debug, Clone)]
pub enum BasisHandle {
    Single(Arc<OrthonormalBasis>),
    Tensor(TensorBasis),
}

impl BasisHandle {
    pub fn dimension(&self) -> usize {
        match self {
            BasisHandle::Single(b) => b.size(),
            BasisHandle::Tensor(t) => t.dimension(),
        }
    }
}

/// Dense Galerkin matrix with its representation metadata.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub entries: DMatrix<f64>,
    pub representation: Representation,
    pub convention: SignConvention,
    pub basis: BasisHandle,
}

impl GeneratorMatrix {
    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    /// Same operator in the requested sign convention.
    pub fn with_convention(&self, convention: SignConvention) -> GeneratorMatrix {
        let mut out = self.clone();
        if convention != self.convention {
            out.entries = -&self.entries;
            out.convention = convention;
        }
        out
    }

    /// Accretive entries `A`, negating if stored as a generator.
    pub fn accretive(&self) -> DMatrix<f64> {
        match self.convention {
            SignConvention::Accretive => self.entries.clone(),
            SignConvention::Generator => -&self.entries,
        }
    }
}

/// Largest entry of the constant-mode row, which vanishes exactly when the
/// basis weight is stationary for the dynamics.
pub fn stationarity_defect(entries: &DMatrix<f64>) -> f64 {
    entries.row(0).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_stationarity(entries: &DMatrix<f64>) -> Result<()> {
    let defect = stationarity_defect(entries);
    let scale = crate::linalg::max_abs(entries).max(1.0);
    if defect > 1e-8 * scale {
        return Err(Error::InconsistentBasis(format!(
            "basis weight is not stationary: constant-mode row has entry {defect:e}"
        )));
    }
    Ok(())
}

/// Accretive matrix of `-(F ∂ + σ²/2 ∂²)` for a scalar diffusion.
fn assemble_scalar_diffusion(
    drift: &dyn Fn(f64) -> f64,
    diffusion: &dyn Fn(f64) -> f64,
    basis: &OrthonormalBasis,
    quad: &QuadratureRule,
) -> DMatrix<f64> {
    let n = basis.size();
    let mut a = DMatrix::zeros(n, n);
    for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
        let v = basis.eval_with_derivatives(x);
        let f = drift(x);
        let s = diffusion(x);
        let half_s2 = 0.5 * s * s;
        for k in 0..n {
            let kphi = f * v.first[k] + half_s2 * v.second[k];
            for j in 0..n {
                a[(j, k)] -= w * v.value[j] * kphi;
            }
        }
    }
    a
}

/// Default Gauss rule for operator assembly: `2N` nodes, or enough for the
/// polynomial degree of the coefficients.
pub fn assembly_quadrature(basis: &OrthonormalBasis, extra_degree: usize) -> Result<QuadratureRule> {
    let n = (2 * basis.size()).max(basis.size() + extra_degree).min(basis.depth());
    gauss_quadrature(basis, n)
}

/// OU generator `K = -θx∂ + σ²/2 ∂²` in a Hermite basis of the stationary
/// Gaussian.
pub fn assemble_ou_generator(
    theta: f64,
    sigma: f64,
    basis: &OrthonormalBasis,
    quad: &QuadratureRule,
) -> Result<GeneratorMatrix> {
    SdeModel::OrnsteinUhlenbeck { theta, sigma }.validate()?;
    if sigma == 0.0 {
        return Err(Error::InvalidModel("OU generator needs a positive noise amplitude".into()));
    }
    let entries = assemble_scalar_diffusion(&|x| -theta * x, &|_| sigma, basis, quad);
    check_stationarity(&entries)?;
    Ok(GeneratorMatrix {
        entries,
        representation: Representation::Weighted,
        convention: SignConvention::Accretive,
        basis: BasisHandle::Single(Arc::new(basis.clone())),
    })
}

/// General scalar diffusion in a basis orthonormal for its stationary
/// density. Accretivity is not guaranteed; a non-stationary weight is still
/// reported as an inconsistent basis.
pub fn assemble_general_generator(
    drift: &ScalarFn,
    diffusion: &ScalarFn,
    basis: &OrthonormalBasis,
    quad: &QuadratureRule,
) -> Result<GeneratorMatrix> {
    let entries = assemble_scalar_diffusion(&**drift, &**diffusion, basis, quad);
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("coefficients are not finite on the quadrature".into()));
    }
    check_stationarity(&entries)?;
    Ok(GeneratorMatrix {
        entries,
        representation: Representation::Weighted,
        convention: SignConvention::Accretive,
        basis: BasisHandle::Single(Arc::new(basis.clone())),
    })
}

/// One-dimensional factor matrices of the Langevin operator.
#[derive(Debug, Clone)]
pub(crate) struct LangevinFactors {
    /// `⟨φ_a, φ_b'⟩`.
    pub d_q: DMatrix<f64>,
    /// `⟨φ_a, V' φ_b⟩`.
    pub vp_q: DMatrix<f64>,
    /// `⟨ψ_k, p ψ_l⟩`.
    pub x_p: DMatrix<f64>,
    /// `⟨ψ_k, ψ_l'⟩`.
    pub d_p: DMatrix<f64>,
    /// `⟨ψ_k, (p/μ) ψ_l' - (1/β) ψ_l''⟩`.
    pub friction_p: DMatrix<f64>,
}

pub(crate) fn langevin_factors(
    model: &LangevinModel,
    basis_q: &OrthonormalBasis,
    basis_p: &OrthonormalBasis,
    quad_q: &QuadratureRule,
    quad_p: &QuadratureRule,
) -> LangevinFactors {
    let nq = basis_q.size();
    let np = basis_p.size();
    let vprime = model.potential.derivative();
    let mut d_q = DMatrix::zeros(nq, nq);
    let mut vp_q = DMatrix::zeros(nq, nq);
    for (&x, &w) in quad_q.nodes.iter().zip(&quad_q.weights) {
        let v = basis_q.eval_with_derivatives(x);
        let vp = vprime.eval(x);
        for b in 0..nq {
            for a in 0..nq {
                d_q[(a, b)] += w * v.value[a] * v.first[b];
                vp_q[(a, b)] += w * v.value[a] * vp * v.value[b];
            }
        }
    }
    let mut x_p = DMatrix::zeros(np, np);
    let mut d_p = DMatrix::zeros(np, np);
    let mut friction_p = DMatrix::zeros(np, np);
    let (mu, beta) = (model.mass, model.beta);
    for (&p, &w) in quad_p.nodes.iter().zip(&quad_p.weights) {
        let v = basis_p.eval_with_derivatives(p);
        for l in 0..np {
            let fric = p / mu * v.first[l] - v.second[l] / beta;
            for k in 0..np {
                x_p[(k, l)] += w * v.value[k] * p * v.value[l];
                d_p[(k, l)] += w * v.value[k] * v.first[l];
                friction_p[(k, l)] += w * v.value[k] * fric;
            }
        }
    }
    LangevinFactors {
        d_q,
        vp_q,
        x_p,
        d_p,
        friction_p,
    }
}

/// Langevin operator
/// `A = -(p/μ)∂_q + V'(q)∂_p + γ((p/μ)∂_p - (1/β)∂²_p)` on the tensor basis.
pub fn assemble_langevin_generator(
    model: &LangevinModel,
    basis: &TensorBasis,
    quad_q: &QuadratureRule,
    quad_p: &QuadratureRule,
) -> Result<GeneratorMatrix> {
    model.validate()?;
    let f = langevin_factors(model, &basis.first, &basis.second, quad_q, quad_p);
    let nq = basis.first.size();
    let hamiltonian = f.d_q.kronecker(&f.x_p) * (-1.0 / model.mass) + f.vp_q.kronecker(&f.d_p);
    let friction = DMatrix::<f64>::identity(nq, nq).kronecker(&f.friction_p) * model.friction;
    let entries = hamiltonian + friction;
    check_stationarity(&entries)?;
    Ok(GeneratorMatrix {
        entries,
        representation: Representation::Weighted,
        convention: SignConvention::Accretive,
        basis: BasisHandle::Tensor(basis.clone()),
    })
}

/// Langevin generator with the default bases and quadrature.
pub fn langevin_generator(model: &LangevinModel, n_q: usize, n_p: usize) -> Result<GeneratorMatrix> {
    let basis = model.tensor_basis(n_q, n_p)?;
    let (qq, qp) = langevin_quadratures(model, &basis)?;
    assemble_langevin_generator(model, &basis, &qq, &qp)
}

/// Assembly rules for the Langevin operator, exact for polynomial `V`.
pub fn langevin_quadratures(
    model: &LangevinModel,
    basis: &TensorBasis,
) -> Result<(QuadratureRule, QuadratureRule)> {
    let m = model.potential.degree();
    let qq = assembly_quadrature(&basis.first, m)?;
    let qp = assembly_quadrature(&basis.second, 2)?.with_axis(1);
    Ok((qq, qp))
}

/// Re-tags a weighted matrix as flat. In orthonormal bases the unitary map
/// between the two spaces leaves coefficients unchanged.
pub fn flat_space_transform(g: &GeneratorMatrix) -> GeneratorMatrix {
    let mut out = g.clone();
    out.representation = match g.representation {
        Representation::Weighted => Representation::Flat,
        Representation::Flat => Representation::Weighted,
    };
    out
}

pub fn apply_generator(g: &GeneratorMatrix, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(g.dimension(), coeffs.len())?;
    Ok(&g.entries * coeffs)
}
