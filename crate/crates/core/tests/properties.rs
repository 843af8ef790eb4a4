use emzkit::basis::{build_hermite_basis, gauss_quadrature};
use emzkit::emz::{solve_gle, TimeGrid};
use emzkit::linalg::{expm, max_abs, min_symmetric_eigenvalue};
use emzkit::operator::*;
use emzkit::projection::{MoriProjection, OrthogonalGenerator};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hermite_gram_is_identity(scale in 0.2f64..5.0, n in 2usize..30) {
        let b = build_hermite_basis(scale, n).unwrap();
        let q = gauss_quadrature(&b, n + 2).unwrap();
        let g = b.gram(&q);
        prop_assert!(max_abs(&(g - DMatrix::identity(n, n))) < 1e-10);
        prop_assert!(b.recurrence().1.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn projector_algebra(seed in 0u64..1000, m in 0usize..4) {
        let n = 12;
        let vs: Vec<DVector<f64>> = (0..m)
            .map(|i| DVector::from_fn(n, |k, _| (((k + 3) * (i + 1) * 7 + seed as usize) % 13) as f64 - 6.0))
            .collect();
        if let Ok(p) = MoriProjection::from_vectors(n, &vs) {
            let pm = p.projector();
            let qm = p.complement();
            prop_assert!(max_abs(&(&pm * &pm - &pm)) < 1e-10);
            prop_assert!(max_abs(&(&pm - pm.transpose())) < 1e-10);
            prop_assert!(max_abs(&(&qm * &qm - &qm)) < 1e-10);
            prop_assert!(max_abs(&(&pm * &qm)) < 1e-10);
            prop_assert!(max_abs(&(&qm * &pm)) < 1e-10);
        }
    }

    #[test]
    fn langevin_accretive_with_projection(
        mass in 0.5f64..2.0,
        friction in 0.2f64..3.0,
        beta in 0.5f64..2.0,
        c4 in 0.0f64..0.5,
    ) {
        let pot = Polynomial::new(vec![0.0, 0.0, 0.5, 0.0, c4]);
        let model = LangevinModel::new(mass, friction, beta, pot).unwrap();
        let basis = model.tensor_basis(10, 8).unwrap();
        let a = langevin_generator(&model, 10, 8).unwrap().entries;
        prop_assert!(min_symmetric_eigenvalue(&a) >= -1e-8);
        let mut v = DVector::zeros(a.nrows());
        v[basis.index(0, 1)] = 1.0;
        let p = MoriProjection::from_vectors(a.nrows(), &[v]).unwrap();
        let og = OrthogonalGenerator::build(&a, &p, 1e-8).unwrap();
        prop_assert!(min_symmetric_eigenvalue(&og.qkq) >= -1e-8);
        let pi = og.pi0q.as_ref().unwrap();
        prop_assert!(max_abs(&(pi * pi - pi)) < 1e-10);
        prop_assert!(max_abs(&(pi - pi.transpose())) < 1e-10);
        prop_assert!(og.pi0q_annihilation().unwrap() < 1e-8);
    }

    #[test]
    fn expm_semigroup(s in 0.0f64..2.0, t in 0.0f64..2.0, gamma in 0.3f64..3.0) {
        let a = langevin_generator(&LangevinModel::harmonic(gamma), 6, 6).unwrap().entries;
        let es = expm(&(&a * -s)).unwrap();
        let et = expm(&(&a * -t)).unwrap();
        let est = expm(&(&a * -(s + t))).unwrap();
        prop_assert!(max_abs(&(es * et - est)) < 1e-10);
    }

    #[test]
    fn gle_exponential(theta in 0.1f64..3.0, c in -2.0f64..2.0) {
        let grid = TimeGrid::uniform(1e-3, 2.0).unwrap();
        let omega = DMatrix::from_element(1, 1, -theta);
        let kernel = vec![DMatrix::zeros(1, 1); grid.len()];
        let q = solve_gle(&omega, &kernel, &grid, &DVector::from_element(1, c), None).unwrap();
        for (t, qk) in grid.times().iter().zip(&q) {
            prop_assert!((qk[0] - c * (-theta * t).exp()).abs() < 1e-6);
        }
    }
}
