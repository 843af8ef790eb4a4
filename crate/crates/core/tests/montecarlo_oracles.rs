mod common;

use common::gibbs_moment;
use emzkit::linalg::expm;
use emzkit::montecarlo::*;
use emzkit::operator::*;
use nalgebra::DVector;

fn ou() -> SdeModel {
    SdeModel::OrnsteinUhlenbeck { theta: 1.0, sigma: 2f64.sqrt() }
}

#[test]
fn ou_autocorrelation_matches_closed_form() {
    let cfg = McConfig::new(20_000, 0.01, 2.0, 3, Integrator::OuExact, 0.0);
    let c = stationary_autocorrelation(&ou(), &cfg, &|x, _| x, 0.5, 2.0).unwrap();
    for (k, &lag) in c.lags.iter().enumerate() {
        let z = (c.values[k] - (-lag as f64).exp()) / c.standard_errors[k];
        assert!(z.abs() <= 3.0, "lag {lag}: z = {z}");
    }
    let v = c.values[0];
    assert!((v - 1.0).abs() <= 3.0 * c.standard_errors[0]);
}

#[test]
fn ou_conditional_mean() {
    let cfg = McConfig::new(20_000, 0.25, 2.0, 9, Integrator::OuExact, 0.0);
    let m = noise_averaged_observable(&ou(), &cfg, [1.0, 0.0], &|x, _| x, 0.25).unwrap();
    for ((t, mean), se) in m.times.iter().zip(&m.means).zip(&m.standard_errors) {
        if *t > 0.0 {
            assert!((mean - (-t).exp()).abs() <= 3.0 * se, "t={t}");
        }
    }
}

fn path_moments(e: &PathEnsemble, f: impl Fn(&[f64; 2]) -> f64) -> (f64, f64) {
    let xs: Vec<f64> = e.states.iter().map(|p| f(p.last().unwrap())).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn baoab_harmonic_equilibrium() {
    let model = LangevinModel::harmonic(1.0);
    let cfg = McConfig::new(8_000, 1e-3, 1.0, 21, Integrator::Baoab, 5.0);
    let e = simulate_langevin_baoab(&model, &cfg, InitialCondition::Stationary, 1.0).unwrap();
    let (p2, se) = path_moments(&e, |s| s[1] * s[1]);
    assert!((p2 - 1.0).abs() <= 3.0 * se, "{p2} ± {se}");
    let (qp, se) = path_moments(&e, |s| s[0] * s[1]);
    assert!(qp.abs() <= 3.0 * se, "{qp} ± {se}");
}

#[test]
fn baoab_quartic_position_variance() {
    let model = LangevinModel::new(1.0, 1.0, 1.0, Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, 0.25])).unwrap();
    let cfg = McConfig::new(8_000, 1e-3, 1.0, 5, Integrator::Baoab, 5.0);
    let e = simulate_langevin_baoab(&model, &cfg, InitialCondition::Stationary, 1.0).unwrap();
    let (q2, se) = path_moments(&e, |s| s[0] * s[0]);
    let want = gibbs_moment(&|q| q.powi(4) / 4.0, 1.0, 2, -8.0, 8.0);
    assert!((q2 - want).abs() <= 3.0 * se, "{q2} ± {se} vs {want}");
}

#[test]
fn noise_average_matches_galerkin_semigroup() {
    let model = LangevinModel::harmonic(1.5);
    let basis = model.tensor_basis(12, 12).unwrap();
    let a = langevin_generator(&model, 12, 12).unwrap().entries;
    let mut p = DVector::zeros(a.nrows());
    p[basis.index(0, 1)] = 1.0;
    let x0 = [0.8, -0.5];
    let sde = SdeModel::Langevin1D(model);
    let cfg = McConfig::new(20_000, 1e-3, 2.0, 77, Integrator::Baoab, 0.0);
    let m = noise_averaged_observable(&sde, &cfg, x0, &|_, p| p, 0.5).unwrap();
    for ((t, mean), se) in m.times.iter().zip(&m.means).zip(&m.standard_errors) {
        let c = expm(&(&a * -*t)).unwrap() * &p;
        let want = basis.reconstruct(&c, x0[0], x0[1]);
        let tol = if *t == 0.0 { 1e-12 } else { 3.0 * se };
        assert!((mean - want).abs() <= tol, "t={t}: {mean} vs {want}");
    }
}

#[test]
fn results_independent_of_thread_count() {
    let model = SdeModel::Langevin1D(LangevinModel::harmonic(1.0));
    let cfg = McConfig::new(400, 1e-3, 1.0, 5, Integrator::Baoab, 0.5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| stationary_autocorrelation(&model, &cfg, &|_, p| p, 0.1, 1.0).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn standard_error_scaling() {
    let a = McConfig::new(2_000, 0.05, 1.0, 1, Integrator::OuExact, 0.0);
    let mut b = a.clone();
    b.n_paths = 8_000;
    let se = |cfg: &McConfig| stationary_autocorrelation(&ou(), cfg, &|x, _| x, 0.5, 1.0).unwrap().standard_errors[1];
    let ratio = se(&a) / se(&b);
    assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
}

#[test]
fn misspecified_rate_is_rejected() {
    let cfg = McConfig::new(20_000, 0.01, 2.0, 4, Integrator::OuExact, 0.0);
    let c = stationary_autocorrelation(&ou(), &cfg, &|x, _| x, 0.1, 2.0).unwrap();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
    let good: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
    let wrong: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
    assert!(cross_validate(&times, &good, &c).unwrap().passed);
    let bad = cross_validate(&times, &wrong, &c).unwrap();
    assert!(!bad.passed && bad.max_abs_z > 3.0);
}

#[test]
fn baoab_step_size_insensitivity() {
    let model = SdeModel::Langevin1D(LangevinModel::harmonic(1.0));
    let p2 = |dt: f64| {
        let cfg = McConfig::new(2_000, dt, 50.0, 8, Integrator::Baoab, 1.0);
        let c = stationary_autocorrelation(&model, &cfg, &|_, p| p, 0.1, 0.0).unwrap();
        (c.values[0], c.standard_errors[0])
    };
    let (a, sa) = p2(0.01);
    let (b, _) = p2(0.005);
    assert!((a - b).abs() <= 4.0 * sa.max(1e-3), "{a} vs {b} (se {sa})");
}
