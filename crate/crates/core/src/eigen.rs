//! Cyclic Jacobi eigenvalue iteration for small dense symmetric matrices.
//!
//! The certificate matrices here are at most a few hundred rows, where the
//! Jacobi method is accurate to a few ulps of the matrix norm and needs no
//! pivoting decisions.

use nalgebra::DMatrix;
use thiserror::Error;

/// Sweep cap. Quadratic convergence typically finishes in under 10 sweeps.
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<(), EigenError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(EigenError::NotSquare { rows, cols });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for i in 0..rows {
        for j in (i + 1)..cols {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if gap > 1e-12 * scale {
                return Err(EigenError::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>, EigenError> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = a.clone();
    let frob = a.norm();
    if frob == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = f64::EPSILON * frob;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(EigenError::NoConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Rotation angle annihilating a[p][q]; pick the smaller root
                // of t^2 + 2 theta t - 1 = 0 for stability.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64, EigenError> {
    Ok(symmetric_eigenvalues(a)?.first().copied().unwrap_or(f64::NAN))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: &DMatrix<f64>) -> Result<f64, EigenError> {
    Ok(symmetric_eigenvalues(a)?.last().copied().unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn diagonal_and_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&a).unwrap();
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-14);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 0.5]));
        assert_eq!(symmetric_eigenvalues(&d).unwrap(), vec![-1.0, 0.5, 3.0]);
    }

    #[test]
    fn k5_laplacian_spectrum() {
        // 5I - 11^T has eigenvalues {0, 5, 5, 5, 5}.
        let l = DMatrix::from_fn(5, 5, |i, j| if i == j { 4.0 } else { -1.0 });
        let e = symmetric_eigenvalues(&l).unwrap();
        assert!(e[0].abs() < 1e-12);
        for v in &e[1..] {
            assert_relative_eq!(*v, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = DMatrix::from_row_slice(2, 3, &[0.0; 6]);
        assert!(matches!(symmetric_eigenvalues(&a), Err(EigenError::NotSquare { .. })));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(symmetric_eigenvalues(&b), Err(EigenError::NotSymmetric { .. })));
        let c = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(symmetric_eigenvalues(&c), Err(EigenError::NonFinite));
    }

    proptest! {
        // nalgebra's QR-based solver is an independent route to the same spectrum.
        #[test]
        fn matches_nalgebra(n in 1usize..9, seed in proptest::collection::vec(-5.0f64..5.0, 81)) {
            let a = DMatrix::from_fn(n, n, |i, j| {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                seed[lo * 9 + hi]
            });
            let ours = symmetric_eigenvalues(&a).unwrap();
            let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|x, y| x.total_cmp(y));
            for (x, y) in ours.iter().zip(&theirs) {
                prop_assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
            let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
            prop_assert!((ours.iter().sum::<f64>() - trace).abs() < 1e-9);
        }
    }
}
