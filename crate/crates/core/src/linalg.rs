//! Thin SVD for the tall, narrow Casorati blocks.
//!
//! The matrix is first reduced by a Householder QR, then the small square
//! factor `R` is diagonalized by one-sided (Hestenes) Jacobi rotations, which
//! give singular values to high relative accuracy even for rank-deficient
//! input.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `m = u * diag(sigma) * v^T` with `u` of size rows x k, `v` of size cols x k,
/// `k = min(rows, cols)`. Columns of `u` with a zero singular value are zero.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::dim("SVD of an empty matrix"));
    }
    if rows < cols {
        let t = thin_svd(&m.transpose())?;
        return Ok(ThinSvd { u: t.v, sigma: t.sigma, v: t.u });
    }
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let (w, sigma, v) = jacobi(r)?;
    Ok(ThinSvd { u: q * w, sigma, v })
}

/// One-sided Jacobi on a square matrix: returns `(u, sigma, v)`.
fn jacobi(mut a: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let n = a.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * (n as f64).sqrt();
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..a.nrows() {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || alpha.min(beta) <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("Jacobi SVD of a {n}x{n} factor did not converge")));
    }
    let mut sigma = Vec::with_capacity(n);
    for j in 0..n {
        let norm = a.column(j).norm();
        sigma.push(norm);
        if norm > 0.0 {
            a.column_mut(j).unscale_mut(norm);
        }
    }
    Ok((a, sigma, v))
}

#[inline]
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (x, y) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * x - s * y;
        m[(k, q)] = s * x + c * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(m: &DMatrix<f64>) {
        let svd = thin_svd(m).unwrap();
        let k = m.nrows().min(m.ncols());
        let rebuilt =
            &svd.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.sigma.clone())) * svd.v.transpose();
        let scale = m.norm().max(1.0);
        assert!((rebuilt - m).abs().max() <= 1e-12 * scale);
        // eigenvalues of the Gram matrix are an independent route to sigma^2
        let gram = if m.nrows() >= m.ncols() { m.transpose() * m } else { m * m.transpose() };
        let mut eig: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|e| e.max(0.0)).collect();
        let mut s2: Vec<f64> = svd.sigma.iter().map(|s| s * s).collect();
        eig.sort_by(f64::total_cmp);
        s2.sort_by(f64::total_cmp);
        assert_eq!(s2.len(), k);
        for (a, b) in s2.iter().zip(&eig) {
            assert!((a - b).abs() <= 1e-10 * scale * scale, "{a} vs {b}");
        }
        let vtv = svd.v.transpose() * &svd.v;
        assert!((vtv - DMatrix::identity(k, k)).abs().max() <= 1e-12);
    }

    #[test]
    fn random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(r, c) in &[(25, 4), (4, 25), (7, 7), (400, 24), (1, 5), (5, 1), (256, 4)] {
            let m = DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            check(&m);
        }
    }

    #[test]
    fn rank_deficient() {
        // rank one: singular value equals the Frobenius norm
        let m = DMatrix::from_fn(25, 4, |r, _| 2.0 + (0.3 * r as f64).sin());
        let svd = thin_svd(&m).unwrap();
        let total: f64 = svd.sigma.iter().sum();
        assert!((total - m.norm()).abs() <= 1e-12 * m.norm());
        check(&m);
        check(&DMatrix::zeros(6, 3));
    }
}
