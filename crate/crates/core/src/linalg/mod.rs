//! Dense linear-algebra kernels shared by the numerical modules.

mod eigen;
mod expm;

pub use eigen::{eigenvalues, eigenvector, sort_spectrum};
pub use expm::expm;

use nalgebra::{DMatrix, DVector};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Symmetric part `(m + mᵀ)/2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part; non-negative (to tolerance)
/// exactly when the matrix is accretive.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_part(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

/// Singular values (descending) together with right and left null-space
/// bases for the singular values at or below `rel_tol * σ_max`.
pub struct NullSpaces {
    pub singular_values: Vec<f64>,
    pub right: DMatrix<f64>,
    pub left: DMatrix<f64>,
}

pub fn null_spaces(m: &DMatrix<f64>, rel_tol: f64) -> NullSpaces {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax;
    let null: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] <= threshold)
        .collect();
    let n = m.ncols();
    let mut right = DMatrix::zeros(n, null.len());
    let mut left = DMatrix::zeros(m.nrows(), null.len());
    for (c, &i) in null.iter().enumerate() {
        right.set_column(c, &v_t.row(i).transpose());
        left.set_column(c, &u.column(i));
    }
    NullSpaces {
        singular_values,
        right,
        left,
    }
}

/// Orthonormal basis of the column span (modified Gram-Schmidt with one
/// reorthogonalization pass). Columns that are dependent to `tol` are dropped.
pub fn orthonormalize(columns: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for c in columns.column_iter() {
        let mut v = c.into_owned();
        let norm0 = v.norm();
        for _ in 0..2 {
            for q in &kept {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm0 > 0.0 && norm > tol * norm0 {
            kept.push(v / norm);
        }
    }
    if kept.is_empty() {
        DMatrix::zeros(columns.nrows(), 0)
    } else {
        DMatrix::from_columns(&kept)
    }
}

/// Principal angles (radians, ascending) between the column spans of `a`
/// and `b`. Both arguments are orthonormalized first. When the dimensions
/// differ, the missing directions count as right angles.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormalize(a, 1e-12);
    let qb = orthonormalize(b, 1e-12);
    let k = qa.ncols().max(qb.ncols());
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return vec![std::f64::consts::FRAC_PI_2; k];
    }
    let c = qa.transpose() * &qb;
    let mut cos: Vec<f64> = c.singular_values().iter().copied().collect();
    cos.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let mut angles: Vec<f64> = cos.iter().map(|&s| s.clamp(-1.0, 1.0).acos()).collect();
    // acos loses precision near 1; small angles come from the sines, the
    // singular values of the part of `qb` outside span(`qa`).
    let residual = &qb - &qa * &c;
    let mut sin: Vec<f64> = residual.singular_values().iter().copied().collect();
    sin.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    for (i, ang) in angles.iter_mut().enumerate() {
        if cos[i] > 0.999 && i < sin.len() {
            *ang = sin[i].clamp(0.0, 1.0).asin();
        }
    }
    angles.resize(k, std::f64::consts::FRAC_PI_2);
    angles
}

/// Spectral (2-)norm estimate by power iteration on `mᵀm` started from
/// `start`. Rayleigh quotients of successive iterates are non-decreasing, so
/// the estimate is never below `‖m start‖ / ‖start‖`.
pub fn operator_norm(m: &DMatrix<f64>, start: &DVector<f64>, min_iter: usize, max_iter: usize) -> f64 {
    let mut x = start.clone();
    let n0 = x.norm();
    if n0 == 0.0 {
        x = DVector::from_element(m.ncols(), 1.0);
    }
    let nx = x.norm();
    x /= nx;
    let mut estimate = (m * &x).norm();
    for it in 0..max_iter {
        let y = m * &x;
        let z = m.transpose() * &y;
        let zn = z.norm();
        if zn == 0.0 {
            break;
        }
        x = z / zn;
        let next = (m * &x).norm();
        let converged = (next - estimate).abs() <= 1e-14 * next;
        estimate = estimate.max(next);
        if it + 1 >= min_iter && converged {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn null_space_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
        let ns = null_spaces(&m, 1e-10);
        assert_eq!(ns.right.ncols(), 1);
        assert!((&m * &ns.right).norm() < 1e-12);
        assert!((m.transpose() * &ns.left).norm() < 1e-12);
    }

    #[test]
    fn principal_angles_of_same_span() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        let ang = principal_angles(&a, &b);
        assert!(ang.iter().all(|&x| x < 1e-12));
        let c = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let ang = principal_angles(&a, &c);
        assert_abs_diff_eq!(ang[0], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let m = DMatrix::from_fn(8, 8, |i, j| ((i * 3 + j * 5) % 11) as f64 - 5.0);
        let exact = m.singular_values().max();
        let est = operator_norm(&m, &DVector::from_element(8, 1.0), 50, 2000);
        assert!((est - exact).abs() < 1e-9 * exact);
    }
}
