//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every criterion is evaluated and
//! reported even when an earlier one fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use emzkit::basis::build_hermite_basis;
use emzkit::emz::{solve_gle, EmzDecomposition, TimeGrid};
use emzkit::linalg::{expm, max_abs, min_symmetric_eigenvalue, principal_angles};
use emzkit::operator::*;
use emzkit::projection::{build_mori_projection, MoriProjection, OrthogonalGenerator};
use emzkit::spectral::{
    cusp_diagnostic, eigen_decompose, fit_decay, semigroup_decay, submultiplicativity_check,
};
use emzkit_cli::{cmd_validate, ExperimentConfig, Verdict};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Criteria that cannot be met as stated, with the reason.
const KNOWN_FAILURES: &[(&str, &str)] = &[(
    "AC-6",
    "K(t) is constant for the momentum observable of the harmonic model, so no decay rate can be fitted",
)];

// ---------------------------------------------------------------- oracles

/// Eigenvalues `n λ₊ + k λ₋` of the harmonic Langevin generator with unit
/// stiffness.
fn kramers(gamma: f64, mass: f64, max_level: usize) -> Vec<Complex64> {
    let b = gamma / mass;
    let disc = Complex64::new(b * b - 4.0 / mass, 0.0).sqrt();
    let lp = (b + disc) / 2.0;
    let lm = (b - disc) / 2.0;
    let mut out = Vec::new();
    for n in 0..=max_level {
        for k in 0..=max_level - n {
            out.push(lp * n as f64 + lm * k as f64);
        }
    }
    out
}

fn by_modulus(values: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    v.truncate(k);
    v
}

fn nearest(z: Complex64, set: &[Complex64]) -> f64 {
    set.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min)
}

fn rel(z: Complex64, set: &[Complex64]) -> f64 {
    nearest(z, set) / z.norm().max(1.0)
}

// ----------------------------------------------------------------- models

struct Langevin {
    a: DMatrix<f64>,
    basis: emzkit::basis::TensorBasis,
    model: LangevinModel,
}

fn langevin(model: LangevinModel, nq: usize, np: usize) -> Langevin {
    let basis = model.tensor_basis(nq, np).unwrap();
    let (qq, qp) = langevin_quadratures(&model, &basis).unwrap();
    let a = assemble_langevin_generator(&model, &basis, &qq, &qp).unwrap().entries;
    Langevin { a, basis, model }
}

fn quartic() -> LangevinModel {
    LangevinModel::new(1.0, 1.0, 1.0, Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, 0.25])).unwrap()
}

/// Projection on the momentum `p = √(μ/β) ψ₁(p)`.
fn momentum(s: &Langevin) -> MoriProjection {
    let mut v = DVector::zeros(s.a.nrows());
    v[s.basis.index(0, 1)] = (s.model.mass / s.model.beta).sqrt();
    MoriProjection::from_vectors(s.a.nrows(), &[v]).unwrap()
}

fn ou(theta: f64, sigma: f64, n: usize) -> (DMatrix<f64>, MoriProjection) {
    let b = build_hermite_basis(ou_stationary_scale(theta, sigma), n).unwrap();
    let q = assembly_quadrature(&b, 4).unwrap();
    let a = assemble_ou_generator(theta, sigma, &b, &q).unwrap().entries;
    let p = build_mori_projection(&[&|x| x], &b, &q).unwrap();
    (a, p)
}

fn constant_projector(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    p[(0, 0)] = 1.0;
    p
}

fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5)
}

fn grid(dt: f64, t_end: f64) -> Vec<f64> {
    (0..=((t_end / dt).round() as usize)).map(|k| k as f64 * dt).collect()
}

// --------------------------------------------------------------- criteria

fn ac1_ou_exactness() -> Outcome {
    let (a, p) = ou(1.0, 2f64.sqrt(), 20);
    let og = OrthogonalGenerator::build(&a, &p, 1e-8).unwrap();
    let g = TimeGrid::uniform(1e-3, 5.0).unwrap();
    let emz = EmzDecomposition::compute(&a, &p, &og, &g).unwrap();
    let omega_err = (emz.omega[(0, 0)] + 1.0).abs();
    let k_max = emz.kernel_series.iter().map(max_abs).fold(0.0, f64::max);
    let f_max = emz.fluct_series.iter().flatten().map(|f| f.amax()).fold(0.0, f64::max);
    let q = solve_gle(&emz.omega, &emz.kernel_series, &g, &DVector::from_element(1, 1.0), None).unwrap();
    let gle_err = g
        .times()
        .iter()
        .zip(&q)
        .map(|(t, v)| (v[0] - (-t).exp()).abs())
        .fold(0.0, f64::max);
    outcome(
        omega_err <= 1e-12 && k_max <= 1e-10 && f_max <= 1e-10 && gle_err <= 1e-6,
        format!("|Ω+1|={omega_err:.1e} max|K|={k_max:.1e} max|f|={f_max:.1e} GLE err={gle_err:.1e}"),
    )
}

fn ac2_ou_spectrum() -> Outcome {
    let mut worst = 0.0f64;
    let mut min_re = f64::INFINITY;
    for (theta, sigma) in [(1.0, 2f64.sqrt()), (0.7, 1.3)] {
        let (a, _) = ou(theta, sigma, 40);
        let mut eigs = eigen_decompose(&a).unwrap();
        eigs.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        for (k, z) in eigs.iter().take(13).enumerate() {
            let want = theta * k as f64;
            worst = worst.max((z - want).norm() / want.max(1.0));
        }
        min_re = min_re.min(eigs.iter().map(|z| z.re).fold(f64::INFINITY, f64::min));
    }
    outcome(
        worst <= 1e-8 && min_re >= -1e-8,
        format!("max rel err on 13 smallest={worst:.1e} min Re={min_re:.1e}"),
    )
}

fn ac3_langevin_spectrum() -> Outcome {
    let mut worst = 0.0f64;
    let mut shift = 0.0f64;
    for gamma in [1.0, 3.0] {
        let model = LangevinModel::harmonic(gamma);
        let coarse = eigen_decompose(&langevin(model.clone(), 16, 16).a).unwrap();
        let fine = eigen_decompose(&langevin(model, 24, 24).a).unwrap();
        let oracle = kramers(gamma, 1.0, 30);
        let got = by_modulus(&coarse, 10);
        for z in &got {
            worst = worst.max(rel(*z, &oracle));
            shift = shift.max(nearest(*z, &fine));
        }
        for w in by_modulus(&oracle, 10) {
            worst = worst.max(rel(w, &coarse));
        }
    }
    outcome(
        worst <= 1e-6 && shift <= 1e-6,
        format!("max rel err vs Kramers={worst:.1e} refinement 16→24 shift={shift:.1e}"),
    )
}

fn ac4_kernel_structure() -> Outcome {
    let s = langevin(LangevinModel::harmonic(1.0), 16, 16);
    let p = momentum(&s);
    let og = OrthogonalGenerator::build(&s.a, &p, 1e-8).unwrap();
    let dim = og.kernel_dimension();
    // Constant, p and the conjugate w = -μ q solving A w = p.
    let mut span = DMatrix::zeros(s.a.nrows(), 3);
    span[(s.basis.index(0, 0), 0)] = 1.0;
    span[(s.basis.index(0, 1), 1)] = 1.0;
    span[(s.basis.index(1, 0), 2)] = -1.0;
    let angle = match &og.kernel_basis {
        Some(k) => principal_angles(k, &span).into_iter().fold(0.0, f64::max),
        None => f64::INFINITY,
    };
    outcome(
        dim == Some(3) && angle <= 1e-4,
        format!("null-space dimension={dim:?} max principal angle={angle:.1e}"),
    )
}

fn ac5_imaginary_axis() -> Outcome {
    let mut violations = 0;
    let mut worst_re = f64::INFINITY;
    for s in [langevin(LangevinModel::harmonic(1.0), 16, 16), langevin(quartic(), 24, 16)] {
        let p = momentum(&s);
        let og = OrthogonalGenerator::build(&s.a, &p, 1e-8).unwrap();
        for z in eigen_decompose(&og.qkq).unwrap() {
            if z.im.abs() > 1e-6 {
                worst_re = worst_re.min(z.re);
                if z.re <= 1e-6 {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("violations={violations} min Re over complex eigenvalues={worst_re:.3e}"),
    )
}

fn ac6_kernel_relaxation() -> Outcome {
    let s = langevin(LangevinModel::harmonic(1.0), 16, 16);
    let p = momentum(&s);
    let og = OrthogonalGenerator::build(&s.a, &p, 1e-8).unwrap();
    let g = TimeGrid::uniform(0.05, 30.0).unwrap();
    let emz = EmzDecomposition::compute(&s.a, &p, &og, &g).unwrap();
    let gap = cusp_diagnostic(&eigen_decompose(&og.qkq).unwrap(), 1e-6, 1e-6)
        .spectral_gap
        .unwrap();
    let dev = emz.kernel_deviation();
    let max_dev = dev.iter().copied().fold(0.0, f64::max);
    let fit = fit_decay(g.times(), &dev);
    let rate_ok = fit.as_ref().is_some_and(|f| (f.rate - gap).abs() <= 0.1 * gap);

    // ⟨QK*u, π₀^Q K u⟩ / ⟨u, u⟩ with K = -A, K* = -Aᵀ and π₀^Q the
    // spectral projection onto the null space of QKQ.
    let v = p.observable(0);
    let q = DMatrix::identity(v.len(), v.len()) - p.projector();
    let qkq = &q * &s.a * &q;
    let svd = qkq.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let null: Vec<usize> = (0..v.len()).filter(|&i| svd.singular_values[i] <= 1e-8 * smax).collect();
    let right = DMatrix::from_columns(
        &null
            .iter()
            .map(|&i| svd.v_t.as_ref().unwrap().row(i).transpose())
            .collect::<Vec<_>>(),
    );
    let left = DMatrix::from_columns(&null.iter().map(|&i| svd.u.as_ref().unwrap().column(i)).collect::<Vec<_>>());
    let pi = &right * (left.transpose() * &right).try_inverse().unwrap() * left.transpose();
    let lhs = -(&q * s.a.transpose() * &v);
    let rhs = &pi * -(&s.a * &v);
    let want = lhs.dot(&rhs) / v.dot(&v);
    let k_inf = emz.kernel_equilibrium[(0, 0)];
    let k_err = (k_inf - want).abs();
    let rate = fit.map_or("none".to_string(), |f| format!("{:.4}", f.rate));
    outcome(
        rate_ok && k_err <= 1e-6,
        format!(
            "fitted rate={rate} vs QKQ gap={gap:.4} (max ‖K-K∞‖={max_dev:.1e}); K∞={k_inf:.6} formula={want:.6} err={k_err:.1e}"
        ),
    )
}

fn ac7_monte_carlo() -> Outcome {
    let text = "\
[model]
kind = langevin
mass = 1
friction = 1
beta = 1
potential = 0, 0, 0.5
[basis]
n_q = 16
n_p = 16
[projection]
observables = p
[time]
stop = 5
step = 0.001
[mc]
enabled = true
paths = 100000
dt = 0.001
burn_in = 50
horizon = 5
lag_step = 0.1
max_lag = 5
seed = 2024
";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let report = cmd_validate(&cfg).unwrap();
    let cv = report.check("cross_validation").unwrap();
    let z = cv.measured.unwrap_or(f64::INFINITY);
    outcome(
        cv.verdict == Verdict::Pass && z <= 3.0,
        format!("max |z|={z:.3} over 51 lags, 1e5 BAOAB paths"),
    )
}

fn ac8_semigroup_decay() -> Outcome {
    let mut worst_ratio = f64::INFINITY;
    let mut monotone = true;
    let mut contractive = true;
    let (ou_a, _) = ou(1.3, 1.0, 16);
    let mats = [
        ou_a,
        langevin(LangevinModel::harmonic(1.0), 14, 14).a,
        langevin(LangevinModel::harmonic(3.0), 14, 14).a,
    ];
    for (i, a) in mats.iter().enumerate() {
        let n = a.nrows();
        let gap = cusp_diagnostic(&eigen_decompose(a).unwrap(), 1e-6, 1e-6).spectral_gap.unwrap();
        let u = random_vector(n, 100 + i as u64);
        let d = semigroup_decay(a, &constant_projector(n), &u, &grid(0.1, 80.0)).unwrap();
        let rate = d.fit.as_ref().map_or(0.0, |f| f.rate);
        worst_ratio = worst_ratio.min(rate / gap);
        let floor = 1e-10 * d.residuals[0];
        for w in d.residuals.windows(2) {
            if w[0] > floor && w[1] > w[0] * (1.0 + 1e-8) {
                monotone = false;
            }
        }
        for t in [0.01, 0.5, 2.0, 8.0] {
            let e = expm(&(a * -t)).unwrap();
            if (&e * &u).norm() > u.norm() * (1.0 + 1e-8) {
                contractive = false;
            }
        }
    }
    outcome(
        worst_ratio >= 0.9 && monotone && contractive,
        format!("min fitted rate / gap={worst_ratio:.4} non-increasing={monotone} contractive={contractive}"),
    )
}

fn ac9_submultiplicativity() -> Outcome {
    let (ou_a, _) = ou(1.0, 1.0, 16);
    let mats = [ou_a, langevin(LangevinModel::harmonic(1.0), 10, 10).a];
    let mut worst = 0.0f64;
    for (i, a) in mats.iter().enumerate() {
        let u = random_vector(a.nrows(), 7 + i as u64);
        for t in [0.5, 1.0, 2.0] {
            for row in submultiplicativity_check(a, &u, t, 8).unwrap() {
                worst = worst.max(row.ratio);
            }
        }
    }
    outcome(worst <= 1.0 + 1e-6, format!("max lhs/rhs={worst:.6}"))
}

fn ac10_projectors() -> Outcome {
    let mut proj_err = 0.0f64;
    let mut pi_err = 0.0f64;
    let mut flat_err = 0.0f64;
    let mut sym_min = f64::INFINITY;
    for (model, nq, np) in [(LangevinModel::harmonic(1.0), 12, 12), (quartic(), 20, 12)] {
        let s = langevin(model, nq, np);
        let p = momentum(&s);
        let pm = p.projector();
        let qm = p.complement();
        proj_err = proj_err.max(max_abs(&(&pm * &pm - &pm))).max(max_abs(&(&pm * &qm)));
        let mut og = OrthogonalGenerator::build(&s.a, &p, 1e-8).unwrap();
        let pi = match og.pi0q.clone() {
            Some(pi) => pi,
            None => emzkit::projection::build_pi0q(&mut og).unwrap(),
        };
        pi_err = pi_err
            .max(max_abs(&(&pi * &pi - &pi)))
            .max(max_abs(&(&pi - pi.transpose())));
        let (qq, qp) = langevin_quadratures(&s.model, &s.basis).unwrap();
        let ladder = assemble_ladder_form(&s.model, &s.basis, &qq, &qp).unwrap();
        let weighted = eigen_decompose(&s.a).unwrap();
        let flat = eigen_decompose(&ladder.reassemble()).unwrap();
        for z in &weighted {
            flat_err = flat_err.max(nearest(*z, &flat));
        }
        sym_min = sym_min
            .min(min_symmetric_eigenvalue(&s.a))
            .min(min_symmetric_eigenvalue(&og.qkq));
    }
    outcome(
        proj_err <= 1e-10 && pi_err <= 1e-10 && flat_err <= 1e-8 && sym_min >= -1e-8,
        format!(
            "P²-P, PQ={proj_err:.1e} π₀^Q idempotent/symmetric={pi_err:.1e} weighted vs flat={flat_err:.1e} min sym eig={sym_min:.1e}"
        ),
    )
}

fn ac11_reproducibility() -> Outcome {
    let text = "\
[model]
kind = langevin
friction = 1
potential = 0, 0, 0.5
[basis]
n = 10
[projection]
observables = p
[time]
stop = 2
step = 0.01
[mc]
enabled = true
paths = 400
dt = 0.01
burn_in = 2
horizon = 2
lag_step = 0.1
max_lag = 2
seed = 99
";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        cmd_validate(&cfg).unwrap().write(d.path()).unwrap();
    }
    let mut files: Vec<String> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f != "timings.json")
        .collect();
    files.sort();
    let identical = files
        .iter()
        .all(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap());
    outcome(
        identical && files.len() >= 7,
        format!("{} files compared, identical={identical}", files.len()),
    )
}

// ----------------------------------------------------------------- driver

type Criterion = (&'static str, &'static str, Option<f64>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("AC-1", "OU exactness", Some(1.0), ac1_ou_exactness),
        ("AC-2", "OU spectrum", Some(1.0), ac2_ou_spectrum),
        ("AC-3", "harmonic Langevin spectrum", Some(30.0), ac3_langevin_spectrum),
        ("AC-4", "QKQ kernel structure", None, ac4_kernel_structure),
        ("AC-5", "imaginary-axis condition", None, ac5_imaginary_axis),
        ("AC-6", "kernel relaxation", Some(60.0), ac6_kernel_relaxation),
        ("AC-7", "EMZ vs Monte Carlo", Some(300.0), ac7_monte_carlo),
        ("AC-8", "semigroup decay", None, ac8_semigroup_decay),
        ("AC-9", "submultiplicativity", None, ac9_submultiplicativity),
        ("AC-10", "projector and representation properties", None, ac10_projectors),
        ("AC-11", "reproducibility", None, ac11_reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (id, name, limit, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| id == p || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let pass = result.pass && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" (limit {l} s)"));
        println!(
            "{id} {} {name}: {}; {secs:.2} s{budget}",
            if pass { "PASS" } else { "FAIL" },
            result.detail
        );
        if !pass {
            match KNOWN_FAILURES.iter().find(|(k, _)| *k == id) {
                Some((_, why)) => println!("      known failure: {why}"),
                None => unexpected += 1,
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criterion/criteria failed");
        std::process::exit(1);
    }
}
