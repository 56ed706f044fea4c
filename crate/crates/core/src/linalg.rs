//! Small dense linear-algebra helpers: commutators, Hermitian checks, and a
//! Jacobi eigensolver used for positivity monitoring. Matrices stay small
//! (a few hundred rows), so cyclic Jacobi is plenty and avoids a LAPACK
//! dependency.

use ndarray::Array2;
use num_complex::Complex64;

pub type CMat = Array2<Complex64>;

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) + b.dot(a)
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diag().sum()
}

/// Max absolute deviation from Hermiticity.
pub fn hermiticity_error(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
/// The input is consumed as workspace.
pub fn symmetric_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    let scale: f64 = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[[i, j]].abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = a.diag().to_vec();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Minimum eigenvalue of a Hermitian matrix via the real-symmetric 2n x 2n
/// embedding [[Re, -Im], [Im, Re]]; each eigenvalue appears twice there, so
/// the minimum is preserved.
pub fn hermitian_min_eigenvalue(h: &CMat) -> f64 {
    let n = h.nrows();
    let mut big = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = h[[i, j]];
            big[[i, j]] = z.re;
            big[[n + i, n + j]] = z.re;
            big[[i, n + j]] = -z.im;
            big[[n + i, j]] = z.im;
        }
    }
    let eig = symmetric_eigenvalues(big);
    eig[0]
}
