//! Dense non-symmetric eigenvalue solver.
//!
//! The matrix is balanced, reduced to upper Hessenberg form by Householder
//! reflections, and the Hessenberg matrix is driven to quasi-triangular form
//! by the Francis implicit double-shift QR iteration. Only eigenvalues are
//! produced by the QR sweep; eigenvectors are recovered on demand by inverse
//! iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const RADIX: f64 = 2.0;
const MAX_ITERATIONS_PER_EIGENVALUE: usize = 60;

/// Eigenvalues of a general real square matrix, sorted by real part and then
/// by imaginary part.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    assert!(matrix.is_square(), "eigenvalues of a non-square matrix");
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let n = matrix.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = matrix.clone();
    balance(&mut a);
    hessenberg_in_place(&mut a);
    let mut values = hessenberg_qr(&mut a)?;
    sort_spectrum(&mut values);
    Ok(values)
}

/// Sorts by real part, then imaginary part.
pub fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Right eigenvector for an (approximate) eigenvalue by shifted inverse
/// iteration. The returned vector has unit Euclidean norm.
pub fn eigenvector(matrix: &DMatrix<f64>, lambda: Complex64) -> Result<DVector<Complex64>> {
    let n = matrix.nrows();
    let scale = matrix.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 0.0);
    let mut shifted: DMatrix<Complex64> = matrix.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    // Deterministic start with no special alignment to any mode.
    let mut x = DVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.1 * ((i * 7919) % 13) as f64, 0.0)
    });
    for _ in 0..3 {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::Internal("singular inverse-iteration system".into()))?;
        let norm = x.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Internal("inverse iteration produced a degenerate vector".into()));
        }
        x /= Complex64::new(norm, 0.0);
    }
    // Fix the phase so that the largest component is real and positive.
    let (imax, _) = x
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bm), (i, z)| if z.norm() > bm { (i, z.norm()) } else { (bi, bm) });
    let phase = x[imax] / Complex64::new(x[imax].norm(), 0.0);
    x /= phase;
    Ok(x)
}

/// Diagonal similarity scaling that equalizes row and column norms.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form (similarity transform).
fn hessenberg_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let alpha_sq: f64 = (k + 1..n).map(|i| a[(i, k)] * a[(i, k)]).sum();
        if alpha_sq == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let alpha = -x0.signum() * alpha_sq.sqrt();
        let alpha = if x0 == 0.0 { -alpha_sq.sqrt() } else { alpha };
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm_sq: f64 = (k + 1..n).map(|i| v[i] * v[i]).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm_sq;
        // A <- H A
        for j in k..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * a[(i, j)]).sum();
            let f = tau * dot;
            for i in k + 1..n {
                a[(i, j)] -= f * v[i];
            }
        }
        // A <- A H
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| a[(i, j)] * v[j]).sum();
            let f = tau * dot;
            for j in k + 1..n {
                a[(i, j)] -= f * v[j];
            }
        }
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
fn hessenberg_qr(a: &mut DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let eps = f64::EPSILON;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut total_iterations = 0usize;
    let mut t = 0.0;
    let mut nn = n as isize - 1;
    #[allow(unused_assignments)]
    let (mut p, mut q, mut r) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 0 {
        let mut its = 0usize;
        let mut l: isize;
        loop {
            let nu = nn as usize;
            // Look for a single small subdiagonal element.
            l = nn;
            while l > 0 {
                let lu = l as usize;
                let mut s = a[(lu - 1, lu - 1)].abs() + a[(lu, lu)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(lu, lu - 1)].abs() <= eps * s {
                    a[(lu, lu - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[(nu, nu)];
            if l == nn {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                y = a[(nu - 1, nu - 1)];
                w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        out[nu - 1] = Complex64::new(x + z, 0.0);
                        out[nu] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                    } else {
                        out[nu] = Complex64::new(x + p, -z);
                        out[nu - 1] = Complex64::new(x + p, z);
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITERATIONS_PER_EIGENVALUE {
                        return Err(Error::EigensolverFailure {
                            iterations: total_iterations,
                        });
                    }
                    if its > 0 && its % 10 == 0 {
                        // Exceptional shift.
                        t += x;
                        for i in 0..=nu {
                            a[(i, i)] -= x;
                        }
                        let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total_iterations += 1;
                    let lu = l as usize;
                    let mut m = nu - 2;
                    loop {
                        z = a[(m, m)];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[(m + 1, m)] + a[(m, m + 1)];
                        q = a[(m + 1, m + 1)] - z - r - s;
                        r = a[(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == lu {
                            break;
                        }
                        let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nu - 1 {
                        a[(i + 2, i)] = 0.0;
                        if i != m {
                            a[(i + 2, i - 1)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[(k, k - 1)];
                            q = a[(k + 1, k - 1)];
                            r = 0.0;
                            if k + 1 != nu {
                                r = a[(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l as usize != m {
                                    a[(k, k - 1)] = -a[(k, k - 1)];
                                }
                            } else {
                                a[(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                                if k + 1 != nu {
                                    pp += r * a[(k + 2, j)];
                                    a[(k + 2, j)] -= pp * z;
                                }
                                a[(k + 1, j)] -= pp * y;
                                a[(k, j)] -= pp * x;
                            }
                            let mmin = nu.min(k + 3);
                            for i in lu..=mmin {
                                let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                                if k + 1 != nu {
                                    pp += z * a[(i, k + 2)];
                                    a[(i, k + 2)] -= pp * r;
                                }
                                a[(i, k + 1)] -= pp * q;
                                a[(i, k)] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_spectrum() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 1.0]));
        let ev = eigenvalues(&m).unwrap();
        for (got, want) in ev.iter().zip([0.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(got.re, want, epsilon = 1e-14);
            assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn rotation_generator_has_imaginary_pair() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&m).unwrap();
        assert_abs_diff_eq!(ev[0].re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[0].im, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1].im, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[10.0, -35.0, 50.0, -24.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let ev = eigenvalues(&m).unwrap();
        for (got, want) in ev.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(got.re, want, epsilon = 1e-10);
            assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn trace_and_determinant_preserved_on_dense_matrix() {
        let n = 40;
        let m = DMatrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 23) as f64 / 7.0 - 1.5);
        let ev = eigenvalues(&m).unwrap();
        let trace: f64 = ev.iter().map(|z| z.re).sum();
        assert_abs_diff_eq!(trace, m.trace(), epsilon = 1e-9);
        let imag: f64 = ev.iter().map(|z| z.im).sum();
        assert_abs_diff_eq!(imag, 0.0, epsilon = 1e-9);
        // Every eigenvalue makes A - lambda I (numerically) singular.
        for z in ev.iter().take(5) {
            let v = eigenvector(&m, *z).unwrap();
            let mc = m.map(|x| Complex64::new(x, 0.0));
            let res = (&mc * &v - &v * *z).norm();
            assert!(res < 1e-8, "residual {res}");
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let m = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(eigenvalues(&m).is_err());
    }
}
