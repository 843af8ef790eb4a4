//! Direct simulation of the SDEs: path ensembles, noise-averaged
//! observables and stationary autocorrelations with batch-means error bars.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path
//! index), consumed in step order, and batch sums are reduced in path-index
//! order, so results do not depend on the number of worker threads.

mod sampling;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::SdeModel;

pub use sampling::InverseCdf;
use sampling::{InitialSampler, Stepper};

/// Phase-space (or one-dimensional) observable `u(x, p)`; one-dimensional
/// models pass `p = 0`.
pub type Observable<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Integrator {
    OuExact,
    EulerMaruyama,
    Baoab,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub integrator: Integrator,
    pub burn_in: f64,
    /// Number of batches for batch-means standard errors.
    pub n_batches: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64, integrator: Integrator, burn_in: f64) -> Self {
        Self {
            n_paths,
            dt,
            horizon,
            seed,
            integrator,
            burn_in,
            n_batches: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dt < self.horizon) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt ({}) must be below the horizon ({})",
                self.dt, self.horizon
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidArgument("at least two paths are required".into()));
        }
        if !(self.burn_in >= 0.0) || !self.burn_in.is_finite() {
            return Err(Error::InvalidArgument("burn-in must be non-negative".into()));
        }
        Ok(())
    }

    /// Additional requirement of the batch-means estimators.
    fn validate_batches(&self) -> Result<()> {
        self.validate()?;
        if self.n_batches < 2 || self.n_batches > self.n_paths {
            return Err(Error::InvalidArgument(format!(
                "batch count {} must be in 2..={}",
                self.n_batches, self.n_paths
            )));
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    fn batch_range(&self, b: usize) -> std::ops::Range<usize> {
        let lo = b * self.n_paths / self.n_batches;
        let hi = (b + 1) * self.n_paths / self.n_batches;
        lo..hi
    }
}

/// Where each path starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// Drawn from the stationary law, then run for the burn-in time.
    Stationary,
    /// The same deterministic state for every path (no burn-in).
    Fixed([f64; 2]),
}

/// Recorded paths; `states[path][k]` is the state at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub states: Vec<Vec<[f64; 2]>>,
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn record_stride(cfg: &McConfig, record_every: f64) -> Result<usize> {
    let stride = cfg.steps(record_every);
    if stride == 0 || ((stride as f64 * cfg.dt) - record_every).abs() > 1e-9 * record_every {
        return Err(Error::InvalidArgument(format!(
            "recording interval {record_every} is not a multiple of dt {}",
            cfg.dt
        )));
    }
    Ok(stride)
}

/// Simulates and records every path at multiples of `record_every`.
pub fn simulate(
    model: &SdeModel,
    cfg: &McConfig,
    initial: InitialCondition,
    record_every: f64,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    model.validate()?;
    let stepper = Stepper::new(model, cfg.integrator, cfg.dt)?;
    let sampler = InitialSampler::new(model)?;
    let stride = record_stride(cfg, record_every)?;
    let n_rec = cfg.steps(cfg.horizon) / stride + 1;
    let burn = cfg.steps(cfg.burn_in);
    let states = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.seed, path);
            let mut s = start_state(&stepper, &sampler, initial, burn, &mut rng)?;
            let mut rec = Vec::with_capacity(n_rec);
            rec.push(s);
            for _ in 1..n_rec {
                stepper.advance(&mut s, stride, &mut rng)?;
                rec.push(s);
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let times = (0..n_rec).map(|k| (k * stride) as f64 * cfg.dt).collect();
    Ok(PathEnsemble { times, states })
}

fn start_state(
    stepper: &Stepper,
    sampler: &InitialSampler,
    initial: InitialCondition,
    burn: usize,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; 2]> {
    match initial {
        InitialCondition::Fixed(s) => Ok(s),
        InitialCondition::Stationary => {
            let mut s = sampler.sample(rng);
            stepper.advance(&mut s, burn, rng)?;
            Ok(s)
        }
    }
}

/// Exact Gaussian transitions of the OU process.
pub fn simulate_ou_exact(
    theta: f64,
    sigma: f64,
    cfg: &McConfig,
    initial: InitialCondition,
    record_every: f64,
) -> Result<PathEnsemble> {
    let mut cfg = cfg.clone();
    cfg.integrator = Integrator::OuExact;
    simulate(&SdeModel::OrnsteinUhlenbeck { theta, sigma }, &cfg, initial, record_every)
}

/// BAOAB splitting for Langevin dynamics.
pub fn simulate_langevin_baoab(
    model: &crate::operator::LangevinModel,
    cfg: &McConfig,
    initial: InitialCondition,
    record_every: f64,
) -> Result<PathEnsemble> {
    let mut cfg = cfg.clone();
    cfg.integrator = Integrator::Baoab;
    simulate(&SdeModel::Langevin1D(model.clone()), &cfg, initial, record_every)
}

/// Time series of means with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanSeries {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub n_samples: usize,
}

/// Pathwise mean of `u` for an ensemble started at a common `x0`.
pub fn noise_averaged_observable(
    model: &SdeModel,
    cfg: &McConfig,
    x0: [f64; 2],
    u: Observable,
    record_every: f64,
) -> Result<MeanSeries> {
    cfg.validate_batches()?;
    model.validate()?;
    let stepper = Stepper::new(model, cfg.integrator, cfg.dt)?;
    let stride = record_stride(cfg, record_every)?;
    let n_rec = cfg.steps(cfg.horizon) / stride + 1;
    let batches = (0..cfg.n_batches)
        .into_par_iter()
        .map(|b| {
            let mut sum = vec![0.0; n_rec];
            for path in cfg.batch_range(b) {
                let mut rng = path_rng(cfg.seed, path);
                let mut s = x0;
                sum[0] += u(s[0], s[1]);
                for slot in sum.iter_mut().skip(1) {
                    stepper.advance(&mut s, stride, &mut rng)?;
                    *slot += u(s[0], s[1]);
                }
            }
            Ok(sum)
        })
        .collect::<Result<Vec<_>>>()?;
    let (means, standard_errors) = batch_statistics(cfg, &batches);
    let times = (0..n_rec).map(|k| (k * stride) as f64 * cfg.dt).collect();
    Ok(MeanSeries {
        times,
        means,
        standard_errors,
        n_samples: cfg.n_paths,
    })
}

/// Overall mean from per-batch sums and the batch-means standard error.
fn batch_statistics(cfg: &McConfig, sums: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = sums[0].len();
    let nb = sums.len() as f64;
    let counts: Vec<f64> = (0..sums.len()).map(|b| cfg.batch_range(b).len() as f64).collect();
    let total: f64 = counts.iter().sum();
    let mut means = vec![0.0; len];
    let mut ses = vec![0.0; len];
    for k in 0..len {
        means[k] = sums.iter().map(|b| b[k]).sum::<f64>() / total;
        let bm: Vec<f64> = sums.iter().zip(&counts).map(|(b, n)| b[k] / n).collect();
        let plain = bm.iter().sum::<f64>() / nb;
        let var = bm.iter().map(|m| (m - plain).powi(2)).sum::<f64>() / (nb - 1.0);
        ses[k] = (var / nb).sqrt();
    }
    (means, ses)
}

fn batch_means(cfg: &McConfig, sums: &[Vec<f64>]) -> Vec<Vec<f64>> {
    sums.iter()
        .enumerate()
        .map(|(b, s)| {
            let n = cfg.batch_range(b).len() as f64;
            s.iter().map(|v| v / n).collect()
        })
        .collect()
}

/// Stationary correlation `E[u(x(0)) u(x(τ))]` on a lag grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub n_samples: usize,
    /// All standard errors vanish (e.g. a constant observable).
    pub degenerate: bool,
    /// Per-batch correlation curves, kept for derived estimators.
    pub batch_values: Vec<Vec<f64>>,
    /// z-score of the difference in `C(0)` between the first and second
    /// half of the recording window; large values suggest the burn-in was
    /// too short.
    pub drift_z: f64,
}

impl CorrelationEstimate {
    /// Ratio estimator `C(τ)/C(0)`, with errors from the spread of the
    /// per-batch ratios.
    pub fn normalized(&self) -> Result<CorrelationEstimate> {
        let c0 = self.values[0];
        if !(c0.abs() > 0.0) {
            return Err(Error::InvalidComparison("C(0) vanishes; cannot normalize".into()));
        }
        let ratios: Vec<Vec<f64>> = self
            .batch_values
            .iter()
            .map(|b| b.iter().map(|v| v / b[0]).collect())
            .collect();
        let nb = ratios.len() as f64;
        let values: Vec<f64> = self.values.iter().map(|v| v / c0).collect();
        let standard_errors: Vec<f64> = (0..values.len())
            .map(|k| {
                let m = ratios.iter().map(|r| r[k]).sum::<f64>() / nb;
                let var = ratios.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (nb - 1.0);
                (var / nb).sqrt()
            })
            .collect();
        Ok(CorrelationEstimate {
            lags: self.lags.clone(),
            values,
            standard_errors,
            n_samples: self.n_samples,
            degenerate: self.degenerate,
            batch_values: ratios,
            drift_z: self.drift_z,
        })
    }
}

/// Stationary autocorrelation of `u` from paths started in equilibrium and
/// run for `cfg.burn_in`, then recorded every `lag_step` over
/// `cfg.horizon`. Each path contributes the time average of
/// `u(t) u(t + τ)` over all available pairs.
pub fn stationary_autocorrelation(
    model: &SdeModel,
    cfg: &McConfig,
    u: Observable,
    lag_step: f64,
    max_lag: f64,
) -> Result<CorrelationEstimate> {
    cfg.validate_batches()?;
    model.validate()?;
    if max_lag > cfg.horizon * (1.0 + 1e-12) {
        return Err(Error::InsufficientHorizon {
            max_lag,
            horizon: cfg.horizon,
        });
    }
    let stepper = Stepper::new(model, cfg.integrator, cfg.dt)?;
    let sampler = InitialSampler::new(model)?;
    let stride = record_stride(cfg, lag_step)?;
    let n_rec = cfg.steps(cfg.horizon) / stride + 1;
    let n_lags = (max_lag / lag_step).round() as usize + 1;
    let burn = cfg.steps(cfg.burn_in);
    let half = n_rec / 2;

    // Per batch: correlation curve followed by C(0) over each half window.
    let batches = (0..cfg.n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; n_lags + 2];
            let mut rec = vec![0.0; n_rec];
            for path in cfg.batch_range(b) {
                let mut rng = path_rng(cfg.seed, path);
                let mut s = start_state(&stepper, &sampler, InitialCondition::Stationary, burn, &mut rng)?;
                rec[0] = u(s[0], s[1]);
                for slot in rec.iter_mut().skip(1) {
                    stepper.advance(&mut s, stride, &mut rng)?;
                    *slot = u(s[0], s[1]);
                }
                for l in 0..n_lags {
                    let pairs = n_rec - l;
                    let sum: f64 = (0..pairs).map(|i| rec[i] * rec[i + l]).sum();
                    acc[l] += sum / pairs as f64;
                }
                let first = &rec[..half.max(1)];
                let second = &rec[half..];
                acc[n_lags] += first.iter().map(|v| v * v).sum::<f64>() / first.len() as f64;
                acc[n_lags + 1] += second.iter().map(|v| v * v).sum::<f64>() / second.len() as f64;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let curves: Vec<Vec<f64>> = batches.iter().map(|b| b[..n_lags].to_vec()).collect();
    let (values, standard_errors) = batch_statistics(cfg, &curves);
    let diffs: Vec<Vec<f64>> = batches.iter().map(|b| vec![b[n_lags] - b[n_lags + 1]]).collect();
    let (d_mean, d_se) = batch_statistics(cfg, &diffs);
    let drift_z = if d_se[0] > 0.0 { d_mean[0] / d_se[0] } else { 0.0 };
    let degenerate = standard_errors.iter().all(|s| *s == 0.0);
    Ok(CorrelationEstimate {
        lags: (0..n_lags).map(|l| l as f64 * lag_step).collect(),
        values,
        standard_errors,
        n_samples: cfg.n_paths,
        degenerate,
        batch_values: batch_means(cfg, &curves),
        drift_z,
    })
}

/// Pointwise comparison of a deterministic prediction with an estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub lags: Vec<f64>,
    pub predicted: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// z-scores of `estimate` against the trajectory `(times, values)`,
/// linearly interpolated onto the estimate's lags. Passes when
/// `max |z| ≤ 3`.
pub fn cross_validate(times: &[f64], values: &[f64], estimate: &CorrelationEstimate) -> Result<CrossValidation> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::InvalidComparison(
            "prediction needs matching times and values with at least two points".into(),
        ));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let tol = 1e-9 * (t1 - t0).abs().max(1.0);
    let mut predicted = Vec::with_capacity(estimate.lags.len());
    let mut z_scores = Vec::with_capacity(estimate.lags.len());
    for ((&lag, &v), &se) in estimate.lags.iter().zip(&estimate.values).zip(&estimate.standard_errors) {
        if lag < t0 - tol || lag > t1 + tol {
            return Err(Error::InvalidComparison(format!(
                "lag {lag} lies outside the prediction grid [{t0}, {t1}]"
            )));
        }
        let i = times.partition_point(|&t| t < lag).clamp(1, times.len() - 1);
        let w = ((lag - times[i - 1]) / (times[i] - times[i - 1])).clamp(0.0, 1.0);
        let p = values[i - 1] + w * (values[i] - values[i - 1]);
        let diff = v - p;
        let z = if diff == 0.0 {
            0.0
        } else if se > 0.0 {
            diff / se
        } else {
            f64::INFINITY.copysign(diff)
        };
        predicted.push(p);
        z_scores.push(z);
    }
    let max_abs_z = z_scores.iter().map(|z| z.abs()).fold(0.0, f64::max);
    Ok(CrossValidation {
        lags: estimate.lags.clone(),
        predicted,
        z_scores,
        max_abs_z,
        passed: max_abs_z <= 3.0,
    })
}
