//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::{Matrix, Real};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix.
///
/// Sweeps over every off-diagonal pair with plane rotations until the
/// off-diagonal Frobenius norm drops below `tol` (use `1e-10` unless there
/// is a reason not to), for at most 100 sweeps. Returns the eigenvalues in
/// descending order and the matching eigenvectors as the columns of the
/// second result, so `m * v_k = lambda_k * v_k`.
///
/// The input must be square and symmetric within `tol`.
pub fn sym_eig<T: Real>(m: &Matrix<T>, tol: f64) -> Result<(Vec<T>, Matrix<T>)> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (m[(i, j)] - m[(j, i)]).abs().to_f64();
            if delta > tol {
                return Err(Error::NotSymmetric { i, j, delta, tol });
            }
        }
    }

    // Work on a symmetrized f64 copy; accumulate rotations into v.
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[(i, j)].to_f64() + m[(j, i)].to_f64());
        }
    }
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };

    let mut off = off_norm(&a);
    let mut sweeps = 0;
    while off > tol {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::EigNoConvergence { sweeps, off });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Smaller-angle root keeps the rotation well conditioned.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        off = off_norm(&a);
    }

    // Sort eigenpairs by descending eigenvalue; ties keep column order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(std::cmp::Ordering::Equal)
    });

    let values: Vec<T> = order.iter().map(|&k| T::from_f64(a[k * n + k])).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = T::from_f64(v[row * n + k]);
        }
    }
    Ok((values, vectors))
}
