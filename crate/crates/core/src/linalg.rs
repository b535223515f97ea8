//! Small dense least-squares helpers. Matrices here are at most a handful
//! of columns wide, so everything is plain row-major `Vec`s.

use crate::scalar::Scalar;

/// Relative eigenvalue cutoff below which a direction counts as null.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Solves `min ‖Xθ − y‖₂` for a row-major `n × p` design.
///
/// Uses the normal equations with a Cholesky factorization; when the Gram
/// matrix is numerically rank deficient it falls back to the
/// Moore–Penrose pseudoinverse, which returns the minimum-norm solution.
/// Either way `Xθ` is the orthogonal projection of `y` onto `col(X)`.
pub(crate) fn least_squares<F: Scalar>(design: &[F], p: usize, y: &[F]) -> Vec<F> {
    let n = y.len();
    debug_assert_eq!(design.len(), n * p);
    let mut gram = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    for i in 0..n {
        let row = &design[i * p..(i + 1) * p];
        for j in 0..p {
            rhs[j] += row[j] * y[i];
            for k in j..p {
                gram[j * p + k] += row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[j * p + k] = gram[k * p + j];
        }
    }
    match cholesky_solve(&gram, p, &rhs) {
        Some(theta) => theta,
        None => pinv_solve(&gram, p, &rhs),
    }
}

fn cholesky_solve<F: Scalar>(a: &[F], p: usize, b: &[F]) -> Option<Vec<F>> {
    let max_diag = (0..p).map(|i| a[i * p + i]).fold(F::zero(), F::max);
    if max_diag <= F::zero() {
        return None;
    }
    let cutoff = max_diag * F::tol(RANK_TOL);
    let mut l = vec![F::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= cutoff {
                    return None;
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    let mut z = vec![F::zero(); p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    let mut x = vec![F::zero(); p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Some(x)
}

/// `A⁺ b` for symmetric positive semi-definite `A` via cyclic Jacobi.
fn pinv_solve<F: Scalar>(a: &[F], p: usize, b: &[F]) -> Vec<F> {
    let (vals, vecs) = symmetric_eigen(a, p);
    let max_val = vals.iter().copied().fold(F::zero(), |m, v| m.max(v.abs()));
    let cutoff = max_val * F::tol(RANK_TOL);
    let mut x = vec![F::zero(); p];
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda == F::zero() {
            continue;
        }
        // eigenvector k is column k of `vecs`
        let proj: F = (0..p).map(|i| vecs[i * p + k] * b[i]).sum();
        let coef = proj / lambda;
        for i in 0..p {
            x[i] += coef * vecs[i * p + k];
        }
    }
    x
}

/// Eigenvalues and column eigenvectors of a symmetric matrix.
pub(crate) fn symmetric_eigen<F: Scalar>(a: &[F], p: usize) -> (Vec<F>, Vec<F>) {
    let mut m = a.to_vec();
    let mut v = vec![F::zero(); p * p];
    for i in 0..p {
        v[i * p + i] = F::one();
    }
    let two = F::lit(2.0);
    for _sweep in 0..100 {
        let off: F = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * p + j] * m[i * p + j])
            .sum();
        if off <= F::epsilon() * F::epsilon() {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                let aij = m[i * p + j];
                if aij == F::zero() {
                    continue;
                }
                let theta = (m[j * p + j] - m[i * p + i]) / (two * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mki = m[k * p + i];
                    let mkj = m[k * p + j];
                    m[k * p + i] = c * mki - s * mkj;
                    m[k * p + j] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[i * p + k];
                    let mjk = m[j * p + k];
                    m[i * p + k] = c * mik - s * mjk;
                    m[j * p + k] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let vki = v[k * p + i];
                    let vkj = v[k * p + j];
                    v[k * p + i] = c * vki - s * vkj;
                    v[k * p + j] = s * vki + c * vkj;
                }
            }
        }
    }
    ((0..p).map(|i| m[i * p + i]).collect(), v)
}

/// Ordinary least-squares line `y ≈ a + b·x`; returns `(a, b, rms_residual)`.
pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
    let theta = least_squares(&design, 2, ys);
    let (a, b) = (theta[0], theta[1]);
    let ss: f64 = xs.iter().zip(ys).map(|(&x, &y)| (y - a - b * x).powi(2)).sum();
    Some((a, b, (ss / xs.len() as f64).sqrt()))
}
