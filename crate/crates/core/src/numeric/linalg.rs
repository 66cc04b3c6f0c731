//! Small dense linear algebra: covariance, Cholesky and symmetric eigenpairs.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Column means and the population covariance (divisor `n`).
pub fn covariance(x: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let (n, m) = x.shape();
    if n == 0 {
        return Err(Error::shape("covariance of an empty sample"));
    }
    let mean = x.column_means();
    let mut centered = x.clone();
    for i in 0..n {
        for (v, mu) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let mut cov = centered.t_matmul(&centered);
    cov.scale(1.0 / n as f64);
    // symmetrize away the GEMM rounding asymmetry
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov.row_mut(i)[j] = v;
            cov.row_mut(j)[i] = v;
        }
    }
    Ok((mean, cov))
}

pub fn trace(a: &Matrix) -> f64 {
    (0..a.rows().min(a.cols())).map(|i| a[(i, i)]).sum()
}

/// Lower-triangular `L` with `L·Lᵀ = a`, or `None` when `a` is not
/// numerically positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l.row_mut(j)[j] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l.row_mut(i)[j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L·x = b` for lower-triangular `L`.
pub fn forward_substitute(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let row = l.row(i);
        let s: f64 = (0..i).map(|k| row[k] * x[k]).sum();
        x[i] = (b[i] - s) / row[i];
    }
    x
}

/// Leading `k` eigenpairs of a symmetric positive semidefinite matrix by
/// power iteration with deflation. Eigenvalues come back nonincreasing.
pub fn symmetric_eigenpairs(a: &Matrix, k: usize, tol: f64, max_iter: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!("eigenpairs of a {}x{} matrix", n, a.cols())));
    }
    if k > n {
        return Err(Error::shape(format!("asked for {k} eigenpairs of a {n}x{n} matrix")));
    }
    let mut work = a.clone();
    let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    for idx in 0..k {
        // deterministic start that is not orthogonal to the leading vector in
        // practice; earlier vectors are projected out each iteration
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i + idx) % 7) as f64 * 0.1).collect();
        orthogonalize(&mut v, &out);
        if normalize(&mut v) == 0.0 {
            v = vec![0.0; n];
            v[idx] = 1.0;
        }
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let mut w = mat_vec(&work, &v);
            orthogonalize(&mut w, &out);
            let norm = normalize(&mut w);
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let delta_flip: f64 = w.iter().zip(&v).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = norm;
            if delta.min(delta_flip) < tol {
                break;
            }
        }
        // Rayleigh quotient is more accurate than the last norm
        let av = mat_vec(&work, &v);
        let rq: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
        if rq.is_finite() {
            lambda = rq.max(0.0);
        }
        for i in 0..n {
            for j in 0..n {
                let d = lambda * v[i] * v[j];
                work.row_mut(i)[j] -= d;
            }
        }
        out.push((lambda, v));
    }
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(out)
}

fn mat_vec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    a.iter_rows()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn orthogonalize(v: &mut [f64], basis: &[(f64, Vec<f64>)]) {
    for (_, u) in basis {
        let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(u) {
            *x -= d * y;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
        norm
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;

    #[test]
    fn cholesky_reconstructs() {
        let a = Matrix::from_rows(&[[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!(l.matmul_t(&l).max_abs_diff(&a) < 1e-12);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn forward_substitution_solves() {
        let l = Matrix::from_rows(&[[2.0, 0.0], [1.0, 3.0]]).unwrap();
        let x = forward_substitute(&l, &[4.0, 11.0]);
        assert_eq!(x, vec![2.0, 3.0]);
    }

    #[test]
    fn covariance_of_known_sample() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 6.0]]).unwrap();
        let (mu, c) = covariance(&x).unwrap();
        assert_eq!(mu, vec![2.0, 4.0]);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c[(0, 1)] - 2.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn eigenpairs_of_diagonal_and_rotated() {
        let d = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let e = symmetric_eigenpairs(&d, 3, 1e-13, 10_000).unwrap();
        let vals: Vec<f64> = e.iter().map(|p| p.0).collect();
        for (v, want) in vals.iter().zip([5.0, 2.0, 1.0]) {
            assert!((v - want).abs() < 1e-9, "{vals:?}");
        }
        // random SPD: eigenvalue sum equals the trace
        let mut rng = SeededRng::new(4, 0);
        let b = rng.normal_matrix(6, 6);
        let a = b.t_matmul(&b);
        let e = symmetric_eigenpairs(&a, 6, 1e-14, 100_000).unwrap();
        let s: f64 = e.iter().map(|p| p.0).sum();
        assert!((s - trace(&a)).abs() < 1e-6 * trace(&a));
        for (lam, v) in &e {
            let av = mat_vec(&a, v);
            let err = av.iter().zip(v).map(|(x, y)| (x - lam * y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-5 * e[0].0, "residual {err}");
        }
    }

    #[test]
    fn too_many_eigenpairs_is_an_error() {
        assert!(symmetric_eigenpairs(&Matrix::identity(2), 3, 1e-9, 10).is_err());
    }
}
