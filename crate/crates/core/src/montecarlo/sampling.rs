use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::operator::{LangevinModel, Polynomial, ScalarFn, SdeModel};

use super::Integrator;

/// Inverse of a tabulated CDF, linear between grid points.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    /// CDF of the density proportional to `exp(log_density)` on `[lo, hi]`.
    pub fn from_log_density(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let logs: Vec<f64> = xs.iter().map(|&x| log_density(x)).collect();
        let lmax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lmax.is_finite() {
            return Err(Error::InvalidModel("density is not finite on the sampling grid".into()));
        }
        let dens: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[n - 1];
        for c in &mut cdf {
            *c /= total;
        }
        Ok(Self { xs, cdf })
    }

    pub fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i - 1] + w * (self.xs[i] - self.xs[i - 1])
    }
}

/// One-step update rule with its precomputed constants.
pub(crate) enum Stepper {
    OuExact { decay: f64, noise: f64 },
    Euler { drift: ScalarFn, diffusion: ScalarFn, dt: f64, sqrt_dt: f64 },
    Baoab {
        force: Polynomial,
        half_dt: f64,
        half_dt_over_mass: f64,
        friction_decay: f64,
        noise: f64,
    },
}

/// Draws `x(0)` from the stationary law.
pub(crate) enum InitialSampler {
    Gaussian1D { sd: f64 },
    Point1D,
    Phase { q: QSampler, p_sd: f64 },
}

pub(crate) enum QSampler {
    Gaussian { mean: f64, sd: f64 },
    Tabulated(InverseCdf),
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl Stepper {
    pub fn new(model: &SdeModel, integrator: Integrator, dt: f64) -> Result<Self> {
        match (model, integrator) {
            (SdeModel::OrnsteinUhlenbeck { theta, sigma }, Integrator::OuExact) => {
                let decay = (-theta * dt).exp();
                let noise = (sigma * sigma * (1.0 - decay * decay) / (2.0 * theta)).sqrt();
                Ok(Stepper::OuExact { decay, noise })
            }
            (SdeModel::OrnsteinUhlenbeck { theta, sigma }, Integrator::EulerMaruyama) => {
                let (theta, sigma) = (*theta, *sigma);
                Ok(Stepper::Euler {
                    drift: std::sync::Arc::new(move |x| -theta * x),
                    diffusion: std::sync::Arc::new(move |_| sigma),
                    dt,
                    sqrt_dt: dt.sqrt(),
                })
            }
            (SdeModel::GeneralDiffusion1D { drift, diffusion }, Integrator::EulerMaruyama) => Ok(Stepper::Euler {
                drift: drift.clone(),
                diffusion: diffusion.clone(),
                dt,
                sqrt_dt: dt.sqrt(),
            }),
            (SdeModel::Langevin1D(m), Integrator::Baoab) => {
                let friction_decay = (-m.friction * dt / m.mass).exp();
                Ok(Stepper::Baoab {
                    force: m.potential.derivative(),
                    half_dt: 0.5 * dt,
                    half_dt_over_mass: 0.5 * dt / m.mass,
                    friction_decay,
                    noise: ((1.0 - friction_decay * friction_decay) * m.mass / m.beta).sqrt(),
                })
            }
            (m, i) => Err(Error::InvalidArgument(format!(
                "integrator {i:?} is not available for model {m:?}"
            ))),
        }
    }

    #[inline]
    pub fn step(&self, s: &mut [f64; 2], rng: &mut ChaCha8Rng) {
        match self {
            Stepper::OuExact { decay, noise } => {
                s[0] = s[0] * decay + noise * normal(rng);
            }
            Stepper::Euler {
                drift,
                diffusion,
                dt,
                sqrt_dt,
            } => {
                let x = s[0];
                s[0] = x + drift(x) * dt + diffusion(x) * sqrt_dt * normal(rng);
            }
            Stepper::Baoab {
                force,
                half_dt,
                half_dt_over_mass,
                friction_decay,
                noise,
            } => {
                s[1] -= half_dt * force.eval(s[0]);
                s[0] += half_dt_over_mass * s[1];
                s[1] = friction_decay * s[1] + noise * normal(rng);
                s[0] += half_dt_over_mass * s[1];
                s[1] -= half_dt * force.eval(s[0]);
            }
        }
    }

    /// Advances `n` steps; fails if the state leaves the finite range.
    pub fn advance(&self, s: &mut [f64; 2], n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        // Dispatch once per call; the inner loops are the hot path.
        match self {
            Stepper::Baoab {
                force,
                half_dt,
                half_dt_over_mass,
                friction_decay,
                noise,
            } => {
                let (mut q, mut p) = (s[0], s[1]);
                let mut f = force.eval(q);
                for _ in 0..n {
                    p -= half_dt * f;
                    q += half_dt_over_mass * p;
                    p = friction_decay * p + noise * normal(rng);
                    q += half_dt_over_mass * p;
                    f = force.eval(q);
                    p -= half_dt * f;
                }
                *s = [q, p];
            }
            Stepper::OuExact { decay, noise } => {
                let mut x = s[0];
                for _ in 0..n {
                    x = x * decay + noise * normal(rng);
                }
                s[0] = x;
            }
            Stepper::Euler { .. } => {
                for _ in 0..n {
                    self.step(s, rng);
                }
            }
        }
        if s[0].is_finite() && s[1].is_finite() {
            Ok(())
        } else {
            Err(Error::UnstableConfiguration(
                "state overflowed; reduce the time step".into(),
            ))
        }
    }
}

impl InitialSampler {
    pub fn new(model: &SdeModel) -> Result<Self> {
        match model {
            SdeModel::OrnsteinUhlenbeck { theta, sigma } => Ok(InitialSampler::Gaussian1D {
                sd: sigma / (2.0 * theta).sqrt(),
            }),
            // No stationary density is available for a general diffusion;
            // paths start at the origin and rely on burn-in.
            SdeModel::GeneralDiffusion1D { .. } => Ok(InitialSampler::Point1D),
            SdeModel::Langevin1D(m) => Ok(InitialSampler::Phase {
                q: position_sampler(m)?,
                p_sd: (m.mass / m.beta).sqrt(),
            }),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        match self {
            InitialSampler::Gaussian1D { sd } => [sd * normal(rng), 0.0],
            InitialSampler::Point1D => [0.0, 0.0],
            InitialSampler::Phase { q, p_sd } => {
                let qv = match q {
                    QSampler::Gaussian { mean, sd } => mean + sd * normal(rng),
                    QSampler::Tabulated(inv) => inv.sample(rng.random::<f64>()),
                };
                [qv, p_sd * normal(rng)]
            }
        }
    }
}

fn position_sampler(m: &LangevinModel) -> Result<QSampler> {
    let c = m.potential.coeffs();
    if m.is_harmonic() {
        // β(c2 q² + c1 q) is Gaussian with mean -c1/(2 c2).
        let (c1, c2) = (c[1], c[2]);
        return Ok(QSampler::Gaussian {
            mean: -c1 / (2.0 * c2),
            sd: 1.0 / (2.0 * m.beta * c2).sqrt(),
        });
    }
    let (lo, hi) = m.position_support();
    let v = m.potential.clone();
    let beta = m.beta;
    Ok(QSampler::Tabulated(InverseCdf::from_log_density(
        move |q| -beta * v.eval(q),
        lo,
        hi,
        200_001,
    )?))
}
