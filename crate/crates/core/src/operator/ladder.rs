use nalgebra::DMatrix;

use super::{assemble_langevin_generator, flat_space_transform, LangevinModel};
use crate::basis::{QuadratureRule, TensorBasis};
use crate::error::{Error, Result};
use crate::linalg::max_abs;

/// Canonical form `A = Σ X_i* X_i - X_0` of the flat Langevin operator.
#[derive(Debug, Clone)]
pub struct LadderForm {
    pub x0: DMatrix<f64>,
    pub xi: Vec<DMatrix<f64>>,
    pub xi_star: Vec<DMatrix<f64>>,
    /// `‖Σ X_i* X_i - X_0 - A‖_max` against the directly assembled matrix.
    pub reassembly_residual: f64,
}

impl LadderForm {
    pub fn reassemble(&self) -> DMatrix<f64> {
        let mut out = -&self.x0;
        for (x, xs) in self.xi.iter().zip(&self.xi_star) {
            out += xs * x;
        }
        out
    }
}

const REASSEMBLY_TOLERANCE: f64 = 1e-6;

/// Builds `X_0`, `X_1` and `X_1*` from first-order flat-space derivatives of
/// `f̃ = φ √ρ` and checks the reassembly against the second-order Galerkin
/// assembly of the same operator.
pub fn assemble_ladder_form(
    model: &LangevinModel,
    basis: &TensorBasis,
    quad_q: &QuadratureRule,
    quad_p: &QuadratureRule,
) -> Result<LadderForm> {
    model.validate()?;
    let flat = flat_space_transform(&assemble_langevin_generator(model, basis, quad_q, quad_p)?);
    let (mu, beta, gamma) = (model.mass, model.beta, model.friction);
    let nq = basis.first.size();
    let np = basis.second.size();
    let vprime = model.potential.derivative();

    // ∂̃ f̃_b = (φ_b' - (β/2) V' φ_b) √ρ, and the √ρ factors cancel against
    // the flat measure.
    let mut dq_flat = DMatrix::zeros(nq, nq);
    let mut vp = DMatrix::zeros(nq, nq);
    for (&x, &w) in quad_q.nodes.iter().zip(&quad_q.weights) {
        let v = basis.first.eval_with_derivatives(x);
        let g = vprime.eval(x);
        for b in 0..nq {
            let deriv = v.first[b] - 0.5 * beta * g * v.value[b];
            for a in 0..nq {
                dq_flat[(a, b)] += w * v.value[a] * deriv;
                vp[(a, b)] += w * v.value[a] * g * v.value[b];
            }
        }
    }
    let mut dp_flat = DMatrix::zeros(np, np);
    let mut pm = DMatrix::zeros(np, np);
    for (&p, &w) in quad_p.nodes.iter().zip(&quad_p.weights) {
        let v = basis.second.eval_with_derivatives(p);
        for l in 0..np {
            let deriv = v.first[l] - 0.5 * beta / mu * p * v.value[l];
            for k in 0..np {
                dp_flat[(k, l)] += w * v.value[k] * deriv;
                pm[(k, l)] += w * v.value[k] * p * v.value[l];
            }
        }
    }

    let x0 = dq_flat.kronecker(&pm) / mu - vp.kronecker(&dp_flat);
    let scale = (gamma / beta).sqrt();
    let shift = &pm * (0.5 * beta / mu);
    let id_q = DMatrix::<f64>::identity(nq, nq);
    let x1 = id_q.kronecker(&(&dp_flat + &shift)) * scale;
    let x1_star = id_q.kronecker(&(-&dp_flat + &shift)) * scale;

    let mut form = LadderForm {
        x0,
        xi: vec![x1],
        xi_star: vec![x1_star],
        reassembly_residual: 0.0,
    };
    let residual = max_abs(&(form.reassemble() - &flat.entries));
    if !(residual <= REASSEMBLY_TOLERANCE) {
        return Err(Error::AssemblyInconsistency {
            residual,
            tolerance: REASSEMBLY_TOLERANCE,
        });
    }
    form.reassembly_residual = residual;
    Ok(form)
}
