use std::fmt;
use std::sync::Arc;

use crate::basis::{build_hermite_basis, build_weighted_basis, LogWeightFn, OrthonormalBasis, TensorBasis};
use crate::error::{Error, Result};

/// Scalar coefficient function of one real variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Polynomial `Σ c_i x^i`, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        )
    }
}

/// One-dimensional Langevin particle with polynomial potential. The noise
/// amplitude is tied to friction and temperature, `σ = √(2γ/β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinModel {
    pub mass: f64,
    pub friction: f64,
    pub beta: f64,
    pub potential: Polynomial,
}

impl LangevinModel {
    pub fn new(mass: f64, friction: f64, beta: f64, potential: Polynomial) -> Result<Self> {
        let m = Self {
            mass,
            friction,
            beta,
            potential,
        };
        m.validate()?;
        Ok(m)
    }

    /// `V(q) = q²/2` with unit mass, friction and inverse temperature.
    pub fn harmonic(friction: f64) -> Self {
        Self {
            mass: 1.0,
            friction,
            beta: 1.0,
            potential: Polynomial::new(vec![0.0, 0.0, 0.5]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mass", self.mass), ("friction", self.friction), ("beta", self.beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        let deg = self.potential.degree();
        if deg < 2 || deg % 2 == 1 {
            return Err(Error::InvalidModel(format!(
                "potential must have even degree at least 2, got degree {deg}"
            )));
        }
        if !(self.potential.leading() > 0.0) {
            return Err(Error::InvalidModel(
                "leading coefficient of the potential must be positive".into(),
            ));
        }
        if self.potential.coeffs().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("potential coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.friction / self.beta).sqrt()
    }

    pub fn is_harmonic(&self) -> bool {
        self.potential.degree() == 2
    }

    /// Interval outside which `e^{-β(V - V_min)}` is below `e^{-700}`.
    pub fn position_support(&self) -> (f64, f64) {
        let v = &self.potential;
        let mut lo = -1.0f64;
        let mut hi = 1.0f64;
        loop {
            let vmin = (0..=4000)
                .map(|i| v.eval(lo + (hi - lo) * i as f64 / 4000.0))
                .fold(f64::INFINITY, f64::min);
            let lo_ok = self.beta * (v.eval(lo) - vmin) > 700.0;
            let hi_ok = self.beta * (v.eval(hi) - vmin) > 700.0;
            if lo_ok && hi_ok {
                return (lo, hi);
            }
            if !lo_ok {
                lo *= 1.25;
            }
            if !hi_ok {
                hi *= 1.25;
            }
        }
    }

    /// Basis of `L²(e^{-βV})` in position.
    pub fn position_basis(&self, size: usize) -> Result<OrthonormalBasis> {
        self.validate()?;
        if self.is_harmonic() && self.potential.coeffs()[1] == 0.0 {
            let k = 2.0 * self.potential.leading();
            return build_hermite_basis(1.0 / (self.beta * k).sqrt(), size);
        }
        let v = self.potential.clone();
        let beta = self.beta;
        let lw: LogWeightFn = Arc::new(move |q| -beta * v.eval(q));
        build_weighted_basis(lw, size, self.position_support())
    }

    /// Gaussian momentum basis with standard deviation `√(μ/β)`.
    pub fn momentum_basis(&self, size: usize) -> Result<OrthonormalBasis> {
        build_hermite_basis((self.mass / self.beta).sqrt(), size)
    }

    /// Position-major tensor basis of phase space.
    pub fn tensor_basis(&self, n_q: usize, n_p: usize) -> Result<TensorBasis> {
        Ok(TensorBasis::new(self.position_basis(n_q)?, self.momentum_basis(n_p)?))
    }
}

/// The SDE whose backward Kolmogorov operator is discretized.
#[derive(Clone)]
pub enum SdeModel {
    /// `dx = -θ x dt + σ dW`.
    OrnsteinUhlenbeck { theta: f64, sigma: f64 },
    /// Underdamped Langevin dynamics in phase space `(q, p)`.
    Langevin1D(LangevinModel),
    /// `dx = F(x) dt + σ(x) dW` in the Itô sense.
    GeneralDiffusion1D { drift: ScalarFn, diffusion: ScalarFn },
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SdeModel::OrnsteinUhlenbeck { theta, sigma } => f
                .debug_struct("OrnsteinUhlenbeck")
                .field("theta", theta)
                .field("sigma", sigma)
                .finish(),
            SdeModel::Langevin1D(m) => f.debug_tuple("Langevin1D").field(m).finish(),
            SdeModel::GeneralDiffusion1D { .. } => f.write_str("GeneralDiffusion1D"),
        }
    }
}

impl SdeModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SdeModel::OrnsteinUhlenbeck { theta, sigma } => {
                if !(*theta > 0.0 && *sigma >= 0.0) || !theta.is_finite() || !sigma.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "OU needs a positive rate and non-negative amplitude, got theta={theta}, sigma={sigma}"
                    )));
                }
                Ok(())
            }
            SdeModel::Langevin1D(m) => m.validate(),
            SdeModel::GeneralDiffusion1D { .. } => Ok(()),
        }
    }
}

/// Stationary standard deviation `σ/√(2θ)` of the OU process.
pub fn ou_stationary_scale(theta: f64, sigma: f64) -> f64 {
    sigma / (2.0 * theta).sqrt()
}
