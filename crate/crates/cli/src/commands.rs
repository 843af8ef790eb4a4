//! The five subcommands, built from shared pipeline stages.

use std::time::Instant;

use emzkit::basis::{build_hermite_basis, OrthonormalBasis, TensorBasis};
use emzkit::emz::{second_fdt_diagnostic, solve_gle, EmzDecomposition, TimeGrid};
use emzkit::linalg::{min_symmetric_eigenvalue, sort_spectrum};
use emzkit::montecarlo::{
    cross_validate, noise_averaged_observable, stationary_autocorrelation, CorrelationEstimate, MeanSeries,
};
use emzkit::operator::{
    assemble_langevin_generator, assemble_ou_generator, assembly_quadrature, langevin_quadratures,
    ou_stationary_scale,
};
use emzkit::projection::{build_mori_projection, build_mori_projection_2d, MoriProjection, OrthogonalGenerator};
use emzkit::spectral::{cusp_diagnostic, eigen_decompose, fit_decay_window, propagate, DecayFit};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig, InitialLaw, ModelConfig, ObservableSpec};
use crate::report::{Check, RunReport, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("computation failed: {0}")]
    Compute(#[from] emzkit::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

enum Basis {
    Single(OrthonormalBasis),
    Tensor(TensorBasis),
}

/// Discretized generator together with the Mori projection.
pub struct Pipeline<'c> {
    cfg: &'c ExperimentConfig,
    pub generator: DMatrix<f64>,
    basis: Basis,
    pub projection: Option<MoriProjection>,
}

impl<'c> Pipeline<'c> {
    pub fn build(cfg: &'c ExperimentConfig) -> CliResult<Self> {
        let specs = &cfg.observables;
        match &cfg.model {
            ModelConfig::Ou { theta, sigma } => {
                let b = build_hermite_basis(ou_stationary_scale(*theta, *sigma), cfg.basis.n)?;
                let degree = specs.iter().map(|s| s.coeffs.len()).max().unwrap_or(0);
                let quad = assembly_quadrature(&b, degree + 2)?;
                let generator = assemble_ou_generator(*theta, *sigma, &b, &quad)?.entries;
                let projection = if specs.is_empty() {
                    None
                } else {
                    let fs: Vec<Box<dyn Fn(f64) -> f64>> = specs
                        .iter()
                        .map(|s| {
                            let s = s.clone();
                            Box::new(move |x: f64| s.eval(x, 0.0)) as Box<dyn Fn(f64) -> f64>
                        })
                        .collect();
                    let refs: Vec<&dyn Fn(f64) -> f64> = fs.iter().map(|f| f.as_ref()).collect();
                    Some(build_mori_projection(&refs, &b, &quad)?)
                };
                Ok(Self {
                    cfg,
                    generator,
                    basis: Basis::Single(b),
                    projection,
                })
            }
            ModelConfig::Langevin { .. } => {
                let model = cfg.model.langevin().expect("langevin model");
                let basis = model.tensor_basis(cfg.basis.n_q, cfg.basis.n_p)?;
                let (qq, qp) = langevin_quadratures(&model, &basis)?;
                let generator = assemble_langevin_generator(&model, &basis, &qq, &qp)?.entries;
                let projection = if specs.is_empty() {
                    None
                } else {
                    let fs: Vec<Box<dyn Fn(f64, f64) -> f64>> = specs
                        .iter()
                        .map(|s| {
                            let s = s.clone();
                            Box::new(move |q: f64, p: f64| s.eval(q, p)) as Box<dyn Fn(f64, f64) -> f64>
                        })
                        .collect();
                    let refs: Vec<&dyn Fn(f64, f64) -> f64> = fs.iter().map(|f| f.as_ref()).collect();
                    Some(build_mori_projection_2d(&refs, &basis, &qq, &qp)?)
                };
                Ok(Self {
                    cfg,
                    generator,
                    basis: Basis::Tensor(basis),
                    projection,
                })
            }
        }
    }

    fn reconstruct(&self, coeffs: &DVector<f64>, x0: [f64; 2]) -> f64 {
        match &self.basis {
            Basis::Single(b) => b.reconstruct(coeffs, x0[0]),
            Basis::Tensor(b) => b.reconstruct(coeffs, x0[0], x0[1]),
        }
    }

    fn require_projection(&self) -> CliResult<&MoriProjection> {
        self.projection.as_ref().ok_or_else(|| {
            CliError::Config(ConfigError {
                line: None,
                field: "projection.observables".into(),
                message: "this command needs at least one observable".into(),
            })
        })
    }

    fn grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::uniform(self.cfg.time.step, self.cfg.time.stop)?)
    }
}

fn new_report(cfg: &ExperimentConfig, command: &str) -> RunReport {
    RunReport {
        command: command.to_string(),
        seed: cfg.mc.seed,
        config_sha256: cfg.sha256.clone(),
        config: cfg.echo.clone(),
        ..RunReport::default()
    }
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!(m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn fit_json(fit: &Option<DecayFit>) -> Value {
    json!(fit)
}

fn spectrum_table(eigs: &[Complex64]) -> Table {
    let mut t = Table::new(vec!["re".into(), "im".into()]);
    for z in eigs {
        t.push(vec![z.re, z.im]);
    }
    t
}

fn sorted_spectrum(m: &DMatrix<f64>) -> CliResult<Vec<Complex64>> {
    let mut eigs = eigen_decompose(m)?;
    sort_spectrum(&mut eigs);
    Ok(eigs)
}

/// Closed-form spectral gap where one is known.
fn closed_form_gap(model: &ModelConfig) -> Option<f64> {
    match model {
        ModelConfig::Ou { theta, .. } => Some(*theta),
        ModelConfig::Langevin {
            mass,
            friction,
            potential,
            ..
        } if potential.len() == 3 => {
            let k = 2.0 * potential[2];
            let half = friction / (2.0 * mass);
            let disc = half * half - k / mass;
            Some(if disc >= 0.0 { half - disc.sqrt() } else { half })
        }
        _ => None,
    }
}

fn spectrum_stage(p: &Pipeline, report: &mut RunReport) -> CliResult<()> {
    let tol = &p.cfg.tolerances;
    let start = Instant::now();
    let eigs = sorted_spectrum(&p.generator)?;
    let diag = cusp_diagnostic(&eigs, tol.re, tol.im);
    let sym_min = min_symmetric_eigenvalue(&p.generator);
    report.sections.insert(
        "spectrum".into(),
        json!({
            "dimension": p.generator.nrows(),
            "spectral_gap": diag.spectral_gap,
            "zero_multiplicity": diag.zero_multiplicity,
            "min_real_part": diag.min_real_part,
            "imaginary_axis_violations": diag.imaginary_axis_violations.len(),
            "cusp_envelope": diag.cusp_envelope,
            "symmetric_part_min_eigenvalue": sym_min,
        }),
    );
    report.tables.insert("spectrum".into(), spectrum_table(&eigs));
    report
        .checks
        .push(Check::at_least("generator_accretive_spectrum", diag.min_real_part, -tol.re));
    report
        .checks
        .push(Check::at_least("generator_accretive_symmetric_part", sym_min, -tol.re));
    match (closed_form_gap(&p.cfg.model), diag.spectral_gap) {
        (Some(want), Some(gap)) => report.checks.push(
            Check::at_most("spectral_gap_closed_form", (gap - want).abs() / want, tol.closed_form)
                .with_note(format!("closed-form gap {want}")),
        ),
        (Some(want), None) => report.checks.push(
            Check::at_most("spectral_gap_closed_form", f64::INFINITY, tol.closed_form)
                .with_note(format!("closed-form gap {want}, but no nonzero eigenvalue found")),
        ),
        (None, _) => report.checks.push(Check::not_applicable(
            "spectral_gap_closed_form",
            "no closed form for this model",
        )),
    }

    if let Some(proj) = &p.projection {
        let og = OrthogonalGenerator::build(&p.generator, proj, tol.kernel)?;
        let qeigs = sorted_spectrum(&og.qkq)?;
        let qdiag = cusp_diagnostic(&qeigs, tol.re, tol.im);
        let qsym = min_symmetric_eigenvalue(&og.qkq);
        report.sections.insert(
            "qkq_spectrum".into(),
            json!({
                "spectral_gap": qdiag.spectral_gap,
                "zero_multiplicity": qdiag.zero_multiplicity,
                "min_real_part": qdiag.min_real_part,
                "imaginary_axis_violations": qdiag.imaginary_axis_violations.len(),
                "cusp_envelope": qdiag.cusp_envelope,
                "symmetric_part_min_eigenvalue": qsym,
            }),
        );
        report.tables.insert("qkq_spectrum".into(), spectrum_table(&qeigs));
        report.checks.push(Check::at_most(
            "qkq_imaginary_axis_violations",
            qdiag.imaginary_axis_violations.len() as f64,
            0.0,
        ));
        report
            .checks
            .push(Check::at_least("qkq_accretive_symmetric_part", qsym, -tol.re));
    }
    report.timings.insert("spectrum".into(), start.elapsed().as_secs_f64());
    Ok(())
}

fn emz_stage(p: &Pipeline, report: &mut RunReport) -> CliResult<EmzDecomposition> {
    let tol = &p.cfg.tolerances;
    let proj = p.require_projection()?;
    let start = Instant::now();
    let grid = p.grid()?;
    let og = OrthogonalGenerator::build(&p.generator, proj, tol.kernel)?;
    let emz = EmzDecomposition::compute(&p.generator, proj, &og, &grid)?;
    let times = grid.times();
    // A deviation already at round-off has no rate to fit.
    let kernel_fit = emz
        .kernel_fit
        .as_ref()
        .and_then(|_| fit_decay_window(times, &emz.kernel_deviation(), tol.fit_lower, tol.fit_upper));
    let fluct_fit = emz
        .fluct_fit
        .as_ref()
        .and_then(|_| fit_decay_window(times, &emz.fluct_deviation(), tol.fit_lower, tol.fit_upper));
    let qdiag = cusp_diagnostic(&eigen_decompose(&og.qkq)?, tol.re, tol.im);
    let fdt = second_fdt_diagnostic(&emz, proj).into_iter().fold(0.0, f64::max);
    let fluct_eq: Vec<f64> = emz.fluct_equilibrium.iter().map(|f| f.norm()).collect();
    report.sections.insert(
        "emz".into(),
        json!({
            "observables": p.cfg.observables.iter().map(|o| o.name.clone()).collect::<Vec<_>>(),
            "gram": matrix_json(&proj.gram),
            "streaming": matrix_json(&emz.omega),
            "kernel_at_zero": matrix_json(&emz.kernel_series[0]),
            "kernel_equilibrium": matrix_json(&emz.kernel_equilibrium),
            "fluctuation_equilibrium_norms": fluct_eq,
            "kernel_fit": fit_json(&kernel_fit),
            "fluctuation_fit": fit_json(&fluct_fit),
            "kernel_max_deviation": emz.kernel_deviation().into_iter().fold(0.0, f64::max),
            "qkq_spectral_gap": qdiag.spectral_gap,
            "kernel_dimension": og.kernel_dimension(),
            "predicted_kernel_dimension": og.predicted_kernel_dimension(),
            "conjugates_found": og.conjugates.iter().map(|c| c.conjugate().is_some()).collect::<Vec<_>>(),
            "two_sidedness_angle": og.two_sidedness_angle(),
            "pi0q_annihilation": og.pi0q_annihilation(),
            "second_fdt_max_deviation": fdt,
        }),
    );

    let m = emz.rank();
    let mut columns = vec!["t".to_string()];
    for i in 0..m {
        for j in 0..m {
            columns.push(format!("K_{i}_{j}"));
        }
    }
    columns.extend((0..m).map(|j| format!("f_norm_{j}")));
    let mut table = Table::new(columns);
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![t];
        let kt = &emz.kernel_series[k];
        for i in 0..m {
            for j in 0..m {
                row.push(kt[(i, j)]);
            }
        }
        row.extend(emz.fluct_series[k].iter().map(|f| f.norm()));
        table.push(row);
    }
    report.tables.insert("emz".into(), table);

    report.checks.push(match (og.kernel_dimension(), og.predicted_kernel_dimension()) {
        (Some(got), Some(want)) => {
            Check::at_most("qkq_kernel_dimension", got.abs_diff(want) as f64, 0.0)
                .with_note(format!("observed {got}, predicted {want}"))
        }
        (Some(got), None) => Check::not_applicable(
            "qkq_kernel_dimension",
            &format!("observed {got}; no prediction without conjugate observables"),
        ),
        _ => Check::not_applicable("qkq_kernel_dimension", "kernel not computed"),
    });
    report.checks.push(match (&kernel_fit, qdiag.spectral_gap) {
        (Some(fit), Some(gap)) => Check::at_most("kernel_decay_rate", (fit.rate - gap).abs() / gap, tol.rate)
            .with_note(format!("fitted {} vs QKQ gap {gap}", fit.rate)),
        (None, _) => Check::not_applicable("kernel_decay_rate", "kernel deviation is at round-off level"),
        (Some(_), None) => Check::not_applicable("kernel_decay_rate", "QKQ has no nonzero eigenvalue"),
    });
    report.timings.insert("emz".into(), start.elapsed().as_secs_f64());
    Ok(emz)
}

/// Mori coordinates `q_i(t)` and the Galerkin semigroup reference.
struct GleOutcome {
    times: Vec<f64>,
    first: Vec<f64>,
}

fn is_position(o: &ObservableSpec) -> bool {
    !o.momentum && o.coeffs == [0.0, 1.0]
}

fn gle_stage(p: &Pipeline, emz: &EmzDecomposition, report: &mut RunReport) -> CliResult<GleOutcome> {
    let cfg = p.cfg;
    let proj = p.require_projection()?;
    let start = Instant::now();
    let grid = &emz.grid;
    let times = grid.times();
    let m = emz.rank();
    let vs: Vec<DVector<f64>> = (0..m).map(|i| proj.observable(i)).collect();

    let (q, reference) = match cfg.mc.initial {
        InitialLaw::Equilibrium => {
            // Correlations with the first observable, normalized by its
            // second moment.
            let g00 = proj.gram[(0, 0)];
            let init = proj.gram.column(0) / g00;
            let q = solve_gle(&emz.omega, &emz.kernel_series, grid, &init, None)?;
            let states = propagate(&p.generator.transpose(), &vs[0], times)?;
            let reference: Vec<DVector<f64>> = states
                .iter()
                .map(|s| DVector::from_iterator(m, vs.iter().map(|v| v.dot(s) / g00)))
                .collect();
            (q, reference)
        }
        InitialLaw::Delta { x0 } => {
            let init = DVector::from_iterator(m, vs.iter().map(|v| p.reconstruct(v, x0)));
            let forcing: Vec<DVector<f64>> = emz
                .fluct_series
                .iter()
                .map(|fs| DVector::from_iterator(m, fs.iter().map(|f| p.reconstruct(f, x0))))
                .collect();
            let q = solve_gle(&emz.omega, &emz.kernel_series, grid, &init, Some(&forcing))?;
            let per_obs = vs
                .iter()
                .map(|v| propagate(&p.generator, v, times))
                .collect::<emzkit::Result<Vec<_>>>()?;
            let reference = (0..times.len())
                .map(|k| DVector::from_iterator(m, per_obs.iter().map(|s| p.reconstruct(&s[k], x0))))
                .collect();
            (q, reference)
        }
    };

    let closed = match (&cfg.model, cfg.observables.as_slice()) {
        (ModelConfig::Ou { theta, .. }, [o]) if is_position(o) => {
            let scale = match cfg.mc.initial {
                InitialLaw::Equilibrium => 1.0,
                InitialLaw::Delta { x0 } => x0[0],
            };
            Some(times.iter().map(|t| scale * (-theta * t).exp()).collect::<Vec<_>>())
        }
        _ => None,
    };

    let mut columns = vec!["t".to_string()];
    columns.extend((0..m).map(|i| format!("q_{i}")));
    columns.extend((0..m).map(|i| format!("semigroup_{i}")));
    if closed.is_some() {
        columns.extend(["closed_form".to_string(), "residual".to_string()]);
    }
    let mut table = Table::new(columns);
    let mut semigroup_err = 0.0f64;
    let mut closed_err = 0.0f64;
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![t];
        row.extend(q[k].iter());
        row.extend(reference[k].iter());
        semigroup_err = semigroup_err.max((&q[k] - &reference[k]).amax());
        if let Some(c) = &closed {
            let r = (q[k][0] - c[k]).abs();
            closed_err = closed_err.max(r);
            row.extend([c[k], r]);
        }
        table.push(row);
    }
    report.tables.insert("gle".into(), table);
    report.sections.insert(
        "gle".into(),
        json!({
            "initial_law": cfg.mc.initial,
            "steps": times.len(),
            "max_semigroup_residual": semigroup_err,
            "max_closed_form_residual": closed.as_ref().map(|_| closed_err),
        }),
    );
    report
        .checks
        .push(Check::at_most("gle_vs_semigroup", semigroup_err, cfg.tolerances.gle));
    report.checks.push(match closed {
        Some(_) => Check::at_most("gle_closed_form", closed_err, cfg.tolerances.gle),
        None => Check::not_applicable("gle_closed_form", "no closed form for this model and observable"),
    });
    report.timings.insert("gle".into(), start.elapsed().as_secs_f64());
    Ok(GleOutcome {
        times: times.to_vec(),
        first: q.iter().map(|v| v[0]).collect(),
    })
}

enum McOutcome {
    Correlation(CorrelationEstimate),
    Mean(MeanSeries),
}

fn mc_stage(p: &Pipeline, report: &mut RunReport) -> CliResult<McOutcome> {
    let cfg = p.cfg;
    let start = Instant::now();
    let sde = cfg.mc_model().sde();
    let mcfg = cfg.mc.mc_config();
    let spec = cfg.observables[0].clone();
    let u = move |x: f64, y: f64| spec.eval(x, y);
    let outcome = match cfg.mc.initial {
        InitialLaw::Equilibrium => {
            let est = stationary_autocorrelation(&sde, &mcfg, &u, cfg.mc.lag_step, cfg.mc.max_lag)?;
            let norm = est.normalized().ok();
            let mut table = Table::new(
                ["lag", "value", "standard_error", "normalized", "normalized_standard_error"]
                    .map(String::from)
                    .to_vec(),
            );
            for k in 0..est.lags.len() {
                let (nv, ns) = norm
                    .as_ref()
                    .map_or((f64::NAN, f64::NAN), |n| (n.values[k], n.standard_errors[k]));
                table.push(vec![est.lags[k], est.values[k], est.standard_errors[k], nv, ns]);
            }
            report.tables.insert("mc".into(), table);
            report.sections.insert(
                "mc".into(),
                json!({
                    "initial_law": cfg.mc.initial,
                    "model": cfg.mc_model(),
                    "paths": mcfg.n_paths,
                    "batches": mcfg.n_batches,
                    "integrator": mcfg.integrator,
                    "seed": mcfg.seed,
                    "second_moment": est.values[0],
                    "second_moment_standard_error": est.standard_errors[0],
                    "burn_in_drift_z": est.drift_z,
                    "degenerate": est.degenerate,
                }),
            );
            let proj = p.require_projection()?;
            report.checks.push(if est.degenerate {
                Check::not_applicable("mc_second_moment", "observable is constant along every path")
            } else if cfg.mc_model.is_some() {
                Check::not_applicable("mc_second_moment", "ensemble uses a different model")
            } else {
                let g00 = proj.gram[(0, 0)];
                let z = (est.values[0] - g00).abs() / est.standard_errors[0];
                Check::at_most("mc_second_moment", z, cfg.tolerances.z)
                    .with_note(format!("|z| of {} against the Galerkin value {g00}", est.values[0]))
            });
            McOutcome::Correlation(est)
        }
        InitialLaw::Delta { x0 } => {
            let ms = noise_averaged_observable(&sde, &mcfg, x0, &u, cfg.mc.lag_step)?;
            let mut table = Table::new(["t", "mean", "standard_error"].map(String::from).to_vec());
            for k in 0..ms.times.len() {
                table.push(vec![ms.times[k], ms.means[k], ms.standard_errors[k]]);
            }
            report.tables.insert("mc".into(), table);
            report.sections.insert(
                "mc".into(),
                json!({
                    "initial_law": cfg.mc.initial,
                    "model": cfg.mc_model(),
                    "paths": mcfg.n_paths,
                    "batches": mcfg.n_batches,
                    "integrator": mcfg.integrator,
                    "seed": mcfg.seed,
                }),
            );
            McOutcome::Mean(ms)
        }
    };
    report.timings.insert("mc".into(), start.elapsed().as_secs_f64());
    Ok(outcome)
}

fn cross_validation_stage(cfg: &ExperimentConfig, gle: &GleOutcome, mc: &McOutcome, report: &mut RunReport) -> CliResult<()> {
    let estimate = match mc {
        McOutcome::Correlation(est) if est.degenerate => {
            report.checks.push(Check::not_applicable(
                "cross_validation",
                "degenerate estimate (constant observable)",
            ));
            return Ok(());
        }
        McOutcome::Correlation(est) => est.normalized()?,
        // The starting value is deterministic on both sides; compare from
        // the first recorded step on.
        McOutcome::Mean(ms) => CorrelationEstimate {
            lags: ms.times[1..].to_vec(),
            values: ms.means[1..].to_vec(),
            standard_errors: ms.standard_errors[1..].to_vec(),
            n_samples: ms.n_samples,
            degenerate: ms.standard_errors.iter().all(|s| *s == 0.0),
            batch_values: Vec::new(),
            drift_z: 0.0,
        },
    };
    let cv = cross_validate(&gle.times, &gle.first, &estimate)?;
    let mut table = Table::new(["lag", "predicted", "estimate", "standard_error", "z"].map(String::from).to_vec());
    for k in 0..cv.lags.len() {
        table.push(vec![
            cv.lags[k],
            cv.predicted[k],
            estimate.values[k],
            estimate.standard_errors[k],
            cv.z_scores[k],
        ]);
    }
    report.tables.insert("cross_validation".into(), table);
    report.sections.insert(
        "cross_validation".into(),
        json!({ "max_abs_z": cv.max_abs_z, "points": cv.lags.len() }),
    );
    report
        .checks
        .push(Check::at_most("cross_validation", cv.max_abs_z, cfg.tolerances.z));
    Ok(())
}

pub fn cmd_spectrum(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let mut report = new_report(cfg, "spectrum");
    let p = timed(&mut report, || Pipeline::build(cfg))?;
    spectrum_stage(&p, &mut report)?;
    Ok(report)
}

pub fn cmd_emz(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let mut report = new_report(cfg, "emz");
    let p = timed(&mut report, || Pipeline::build(cfg))?;
    emz_stage(&p, &mut report)?;
    Ok(report)
}

pub fn cmd_gle(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let mut report = new_report(cfg, "gle");
    let p = timed(&mut report, || Pipeline::build(cfg))?;
    let emz = emz_stage(&p, &mut report)?;
    gle_stage(&p, &emz, &mut report)?;
    Ok(report)
}

pub fn cmd_mc(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let mut report = new_report(cfg, "mc");
    if cfg.observables.is_empty() {
        return Err(ConfigError {
            line: None,
            field: "projection.observables".into(),
            message: "Monte Carlo needs at least one observable".into(),
        }
        .into());
    }
    let p = timed(&mut report, || Pipeline::build(cfg))?;
    mc_stage(&p, &mut report)?;
    Ok(report)
}

/// Spectrum, EMZ, GLE and (when enabled) Monte Carlo with cross-validation.
pub fn cmd_validate(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let mut report = new_report(cfg, "validate");
    let p = timed(&mut report, || Pipeline::build(cfg))?;
    spectrum_stage(&p, &mut report)?;
    let emz = emz_stage(&p, &mut report)?;
    let gle = gle_stage(&p, &emz, &mut report)?;
    if cfg.mc.enabled {
        let mc = mc_stage(&p, &mut report)?;
        cross_validation_stage(cfg, &gle, &mc, &mut report)?;
    } else {
        report
            .checks
            .push(Check::not_applicable("cross_validation", "Monte Carlo disabled"));
    }
    Ok(report)
}

fn timed<T>(report: &mut RunReport, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let start = Instant::now();
    let out = f();
    report.timings.insert("assembly".into(), start.elapsed().as_secs_f64());
    out
}
