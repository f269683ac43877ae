//! Small dense symmetric linear algebra: Cholesky solves and Jacobi
//! eigenvalues for the k-by-k Gram systems of the projection (k <= 5 at
//! desk scale, but nothing here assumes that).

use crate::error::{Error, Result};

/// Cholesky factorization A = L L^T of a symmetric positive definite matrix
/// stored row-major. Returns the lower factor, or `None` if a pivot is not
/// strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let dj = diag.sqrt();
        l[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / dj;
        }
    }
    Some(l)
}

/// Solve L L^T x = b given the lower Cholesky factor.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solve A x = b for symmetric positive definite A with one step of
/// iterative refinement. Errors with `SolverFailure` if the refined
/// residual still exceeds `tol * max(1, ||b||_inf)`.
pub fn spd_solve(a: &[f64], n: usize, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let l = cholesky(a, n).ok_or(Error::DegenerateWeight {
        step: None,
        x_index: None,
        lambda_min: 0.0,
        floor: 0.0,
    })?;
    let mut x = cholesky_solve(&l, n, b);
    let b_scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for _ in 0..2 {
        let r = residual(a, n, &x, b);
        let r_max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r_max <= tol * b_scale {
            return Ok(x);
        }
        let dx = cholesky_solve(&l, n, &r);
        for i in 0..n {
            x[i] += dx[i];
        }
    }
    let r = residual(a, n, &x, b);
    let r_max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r_max <= tol * b_scale {
        Ok(x)
    } else {
        Err(Error::SolverFailure {
            step: None,
            x_index: None,
            residual: r_max,
            tol: tol * b_scale,
        })
    }
}

fn residual(a: &[f64], n: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..n {
            s -= a[i * n + k] * x[k];
        }
        r[i] = s;
    }
    r
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        let scale: f64 = (0..n).map(|i| m[i * n + i].abs()).sum::<f64>().max(1e-300);
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// (lambda_min, lambda_max) of a symmetric matrix.
pub fn sym_extremal_eigenvalues(a: &[f64], n: usize) -> (f64, f64) {
    let ev = sym_eigenvalues(a, n);
    (ev[0], ev[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_known_factor() {
        // A = [[1,2,4],[2,13,23],[4,23,77]] has exact factor [[1,0,0],[2,3,0],[4,5,6]].
        let a = vec![1., 2., 4., 2., 13., 23., 4., 23., 77.];
        let l = cholesky(&a, 3).unwrap();
        let expected = [1., 0., 0., 2., 3., 0., 4., 5., 6.];
        for (got, want) in l.iter().zip(expected.iter()) {
            assert_relative_eq!(got, want, max_relative = 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![1., 2., 2., 1.];
        assert!(cholesky(&a, 2).is_none());
    }

    #[test]
    fn solve_roundtrip() {
        let a = vec![4., 1., 0., 1., 3., 1., 0., 1., 2.];
        let x_true = [1.0, -2.0, 3.0];
        let mut b = vec![0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a[i * 3 + j] * x_true[j];
            }
        }
        let x = spd_solve(&a, 3, &b, 1e-12).unwrap();
        for (got, want) in x.iter().zip(x_true.iter()) {
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn jacobi_eigenvalues_2x2() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let ev = sym_eigenvalues(&[2., 1., 1., 2.], 2);
        assert_relative_eq!(ev[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(ev[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn jacobi_eigenvalues_diag_dominant() {
        let a = vec![10., 1., 0., 1., 7., 0.5, 0., 0.5, 3.];
        let ev = sym_eigenvalues(&a, 3);
        // Trace and determinant are invariants of the spectrum.
        assert_relative_eq!(ev.iter().sum::<f64>(), 20.0, max_relative = 1e-12);
        let det = 10. * (7. * 3. - 0.25) - 1.0 * (3.0);
        assert_relative_eq!(ev[0] * ev[1] * ev[2], det, max_relative = 1e-11);
    }
}
