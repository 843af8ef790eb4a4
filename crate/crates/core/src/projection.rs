//! Finite-rank Mori projections and the orthogonal dynamics `QAQ`.

use nalgebra::{DMatrix, DVector};

use crate::basis::{project_function, OrthonormalBasis, QuadratureRule, TensorBasis};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{max_abs, null_spaces, principal_angles};

/// Gram condition numbers at or above this are treated as rank deficient.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Default relative singular-value threshold for kernel detection.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;

/// Symmetric projection onto the span of `m` observables in `L²(ρ_eq)`.
#[derive(Debug, Clone)]
pub struct MoriProjection {
    /// Observable coefficient vectors as columns (`N × m`).
    pub observables: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    dimension: usize,
}

impl MoriProjection {
    /// Projection from coefficient vectors in an orthonormal basis of
    /// dimension `dimension`. An empty list gives `P = 0`.
    pub fn from_vectors(dimension: usize, observables: &[DVector<f64>]) -> Result<Self> {
        for v in observables {
            check_dim(dimension, v.len())?;
        }
        let v = if observables.is_empty() {
            DMatrix::zeros(dimension, 0)
        } else {
            DMatrix::from_columns(observables)
        };
        let gram = v.transpose() * &v;
        let m = observables.len();
        let gram_inv = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let eig = gram.clone().symmetric_eigen();
            let lmax = eig.eigenvalues.max();
            let lmin = eig.eigenvalues.min();
            let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
            if !(condition < MAX_GRAM_CONDITION) {
                return Err(Error::DependentObservables { condition });
            }
            gram.clone()
                .cholesky()
                .ok_or(Error::DependentObservables { condition })?
                .inverse()
        };
        Ok(Self {
            observables: v,
            gram,
            gram_inv,
            dimension,
        })
    }

    pub fn rank(&self) -> usize {
        self.observables.ncols()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// `P = V G⁻¹ Vᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.dimension, self.dimension);
        }
        &self.observables * &self.gram_inv * self.observables.transpose()
    }

    /// `Q = I - P`.
    pub fn complement(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dimension, self.dimension) - self.projector()
    }

    pub fn observable(&self, i: usize) -> DVector<f64> {
        self.observables.column(i).into_owned()
    }
}

/// Mori projection for scalar observables of a one-dimensional basis.
pub fn build_mori_projection(
    observables: &[&dyn Fn(f64) -> f64],
    basis: &OrthonormalBasis,
    quad: &QuadratureRule,
) -> Result<MoriProjection> {
    let vs = observables
        .iter()
        .map(|f| project_function(f, basis, quad))
        .collect::<Result<Vec<_>>>()?;
    MoriProjection::from_vectors(basis.size(), &vs)
}

/// Mori projection for phase-space observables `f(q, p)`.
pub fn build_mori_projection_2d(
    observables: &[&dyn Fn(f64, f64) -> f64],
    basis: &TensorBasis,
    quad_q: &QuadratureRule,
    quad_p: &QuadratureRule,
) -> Result<MoriProjection> {
    let vs = observables
        .iter()
        .map(|f| basis.project(f, quad_q, quad_p))
        .collect::<Result<Vec<_>>>()?;
    MoriProjection::from_vectors(basis.dimension(), &vs)
}

/// Result of solving `A w_j = v_j` with `w_j ⟂ span{v_i}`.
#[derive(Debug, Clone)]
pub enum ConjugateOutcome {
    Found {
        w: DVector<f64>,
        /// `‖A w - v‖ / ‖v‖`.
        residual: f64,
        /// `max_i |⟨w, v_i⟩|`.
        orthogonality: f64,
        /// `‖Aᵀ w - v‖ / ‖v‖`; small only if the adjoint equation also holds.
        adjoint_residual: f64,
    },
    NotFound {
        residual: f64,
        orthogonality: f64,
    },
}

impl ConjugateOutcome {
    pub fn conjugate(&self) -> Option<&DVector<f64>> {
        match self {
            ConjugateOutcome::Found { w, .. } => Some(w),
            ConjugateOutcome::NotFound { .. } => None,
        }
    }
}

/// Least-squares conjugates on the complement of `Ker(A)`, then
/// `Q`-orthogonalized.
pub fn solve_conjugate_observables(a: &DMatrix<f64>, proj: &MoriProjection) -> Result<Vec<ConjugateOutcome>> {
    check_dim(a.nrows(), proj.dimension())?;
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let pinv = svd
        .pseudo_inverse(1e-10 * smax)
        .map_err(|e| Error::Internal(e.to_string()))?;
    let left_null = null_spaces(a, 1e-10).left;
    let q = proj.complement();
    let mut out = Vec::with_capacity(proj.rank());
    for j in 0..proj.rank() {
        let v = proj.observable(j);
        let vnorm = v.norm();
        let mean = (left_null.transpose() * &v).amax();
        if mean > 1e-10 * vnorm {
            return Err(Error::InvalidObservable(format!(
                "observable {j} has a component {mean:e} along the stationary density"
            )));
        }
        let w = &q * (&pinv * &v);
        let residual = (a * &w - &v).norm() / vnorm;
        let orthogonality = (proj.observables.transpose() * &w).amax();
        if residual <= 1e-6 && orthogonality <= 1e-8 && w.norm() > 0.0 {
            let adjoint_residual = (a.transpose() * &w - &v).norm() / vnorm;
            out.push(ConjugateOutcome::Found {
                w,
                residual,
                orthogonality,
                adjoint_residual,
            });
        } else {
            out.push(ConjugateOutcome::NotFound {
                residual,
                orthogonality,
            });
        }
    }
    Ok(out)
}

/// Orthogonal dynamics `QAQ` with its kernel and equilibrium projector.
#[derive(Debug, Clone)]
pub struct OrthogonalGenerator {
    pub qkq: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub kernel_basis: Option<DMatrix<f64>>,
    pub left_kernel_basis: Option<DMatrix<f64>>,
    pub conjugates: Vec<ConjugateOutcome>,
    pub pi0q: Option<DMatrix<f64>>,
}

/// `QAQ` with `Q = I - P`; `a` must be accretive.
pub fn assemble_qkq(a: &DMatrix<f64>, proj: &MoriProjection) -> Result<OrthogonalGenerator> {
    check_dim(proj.dimension(), a.nrows())?;
    check_dim(proj.dimension(), a.ncols())?;
    let q = proj.complement();
    let qkq = &q * a * &q;
    Ok(OrthogonalGenerator {
        qkq,
        q,
        kernel_basis: None,
        left_kernel_basis: None,
        conjugates: Vec::new(),
        pi0q: None,
    })
}

/// Orthonormal right null space of `QAQ` at relative threshold `tol`; the
/// left null space is stored alongside for the two-sidedness check.
pub fn kernel_qkq(og: &mut OrthogonalGenerator, tol: f64) -> DMatrix<f64> {
    let ns = null_spaces(&og.qkq, tol);
    og.left_kernel_basis = Some(ns.left);
    og.kernel_basis = Some(ns.right.clone());
    ns.right
}

/// `π₀^Q = E Eᵀ` over the orthonormal kernel columns `E`.
pub fn build_pi0q(og: &mut OrthogonalGenerator) -> Result<DMatrix<f64>> {
    let e = match &og.kernel_basis {
        Some(e) => e.clone(),
        None => kernel_qkq(og, DEFAULT_KERNEL_TOL),
    };
    if e.ncols() == 0 {
        return Err(Error::Internal("QKQ has an empty numerical kernel".into()));
    }
    let pi = &e * e.transpose();
    og.pi0q = Some(pi.clone());
    Ok(pi)
}

impl OrthogonalGenerator {
    /// Full pipeline: `QAQ`, conjugates (when the observables have zero
    /// mean), kernel and `π₀^Q`.
    pub fn build(a: &DMatrix<f64>, proj: &MoriProjection, tol: f64) -> Result<Self> {
        let mut og = assemble_qkq(a, proj)?;
        og.conjugates = match solve_conjugate_observables(a, proj) {
            Ok(c) => c,
            Err(Error::InvalidObservable(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        kernel_qkq(&mut og, tol);
        build_pi0q(&mut og)?;
        Ok(og)
    }

    pub fn kernel_dimension(&self) -> Option<usize> {
        self.kernel_basis.as_ref().map(|e| e.ncols())
    }

    /// `2m + 1` when every observable has a conjugate.
    pub fn predicted_kernel_dimension(&self) -> Option<usize> {
        let m = self.conjugates.len();
        if m > 0 && self.conjugates.iter().all(|c| c.conjugate().is_some()) {
            Some(2 * m + 1)
        } else {
            None
        }
    }

    /// Largest principal angle between left and right null spaces.
    pub fn two_sidedness_angle(&self) -> Option<f64> {
        let (r, l) = (self.kernel_basis.as_ref()?, self.left_kernel_basis.as_ref()?);
        Some(principal_angles(r, l).into_iter().fold(0.0, f64::max))
    }

    /// `max(‖QAQ π₀^Q‖_max, ‖π₀^Q QAQ‖_max)`.
    pub fn pi0q_annihilation(&self) -> Option<f64> {
        let pi = self.pi0q.as_ref()?;
        Some(max_abs(&(&self.qkq * pi)).max(max_abs(&(pi * &self.qkq))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_hermite_basis;
    use crate::operator::{assemble_ou_generator, assembly_quadrature, langevin_generator, LangevinModel};

    fn ou_setup(theta: f64, sigma: f64, n: usize) -> (DMatrix<f64>, OrthonormalBasis, QuadratureRule) {
        let s = sigma / (2.0 * theta).sqrt();
        let b = build_hermite_basis(s, n).unwrap();
        let q = assembly_quadrature(&b, 2).unwrap();
        let a = assemble_ou_generator(theta, sigma, &b, &q).unwrap().entries;
        (a, b, q)
    }

    #[test]
    fn ou_single_mode_projection() {
        let (_, b, q) = ou_setup(1.5, 0.8, 8);
        let p = build_mori_projection(&[&|x| x], &b, &q).unwrap();
        let var = 0.8 * 0.8 / 3.0;
        assert!((p.gram[(0, 0)] - var).abs() < 1e-13);
        let mut want = DMatrix::zeros(8, 8);
        want[(1, 1)] = 1.0;
        assert!(max_abs(&(p.projector() - want)) < 1e-13);
    }

    #[test]
    fn collinear_observables_rejected() {
        let (_, b, q) = ou_setup(1.0, 1.0, 6);
        assert!(matches!(
            build_mori_projection(&[&|x| x, &|x| 2.0 * x], &b, &q),
            Err(Error::DependentObservables { .. })
        ));
    }

    #[test]
    fn ou_qkq_zeroes_mode_one() {
        let (a, b, q) = ou_setup(1.0, 2f64.sqrt(), 8);
        let p = build_mori_projection(&[&|x| x], &b, &q).unwrap();
        let og = assemble_qkq(&a, &p).unwrap();
        let mut want = a.clone();
        want.row_mut(1).fill(0.0);
        want.column_mut(1).fill(0.0);
        assert!(max_abs(&(og.qkq - want)) < 1e-13);
    }

    #[test]
    fn ou_has_no_conjugate() {
        let (a, b, q) = ou_setup(2.0, 1.0, 8);
        let p = build_mori_projection(&[&|x| x], &b, &q).unwrap();
        let c = solve_conjugate_observables(&a, &p).unwrap();
        assert!(c[0].conjugate().is_none());
        let og = OrthogonalGenerator::build(&a, &p, DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(og.kernel_dimension(), Some(2));
    }

    #[test]
    fn constant_observable_rejected() {
        let (a, b, q) = ou_setup(1.0, 1.0, 6);
        let p = build_mori_projection(&[&|_| 1.0], &b, &q).unwrap();
        assert!(matches!(
            solve_conjugate_observables(&a, &p),
            Err(Error::InvalidObservable(_))
        ));
    }

    #[test]
    fn zero_rank_gives_stationary_projector() {
        let (a, _, _) = ou_setup(1.0, 1.0, 6);
        let p = MoriProjection::from_vectors(6, &[]).unwrap();
        let mut og = OrthogonalGenerator::build(&a, &p, DEFAULT_KERNEL_TOL).unwrap();
        let pi = build_pi0q(&mut og).unwrap();
        let mut want = DMatrix::zeros(6, 6);
        want[(0, 0)] = 1.0;
        assert!(max_abs(&(pi - want)) < 1e-12);
    }

    #[test]
    fn harmonic_momentum_kernel() {
        let model = LangevinModel::harmonic(1.0);
        let basis = model.tensor_basis(16, 16).unwrap();
        let a = langevin_generator(&model, 16, 16).unwrap().entries;
        let mut vp = DVector::zeros(a.nrows());
        vp[basis.index(0, 1)] = 1.0;
        let p = MoriProjection::from_vectors(a.nrows(), &[vp]).unwrap();
        assert!((p.gram[(0, 0)] - 1.0).abs() < 1e-14);
        let og = OrthogonalGenerator::build(&a, &p, DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(og.kernel_dimension(), Some(3));
        assert_eq!(og.predicted_kernel_dimension(), Some(3));
        let pi = og.pi0q.as_ref().unwrap();
        assert!((pi.trace() - 3.0).abs() < 1e-10);
        assert!(og.pi0q_annihilation().unwrap() < 1e-8);
        assert!(og.two_sidedness_angle().unwrap() < 1e-6);
        match &og.conjugates[0] {
            ConjugateOutcome::Found { residual, .. } => assert!(*residual < 1e-10),
            other => panic!("expected a conjugate, got {other:?}"),
        }
    }
}
