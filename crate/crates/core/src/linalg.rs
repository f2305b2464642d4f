//! Small dense least-squares kernels.

use crate::num::Scalar;

/// Ordinary least-squares solution.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    pub rss: T,
    /// Diagonal of `(X'X)^{-1}`.
    pub inverse_gram_diag: Vec<T>,
}

/// Solves `min ||y - X b||` by Householder QR. `columns` holds the regressors column-major.
/// Returns `None` when the design is numerically rank deficient.
pub fn least_squares<T: Scalar>(columns: &[Vec<T>], y: &[T]) -> Option<LeastSquares<T>> {
    let k = columns.len();
    let n = y.len();
    if k == 0 || n < k || columns.iter().any(|c| c.len() != n) {
        return None;
    }
    let mut a: Vec<Vec<T>> = columns.to_vec();
    let mut rhs = y.to_vec();
    let mut diag = vec![T::zero(); k];
    let scale = columns
        .iter()
        .map(|c| c.iter().map(|v| *v * *v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return None;
    }
    let tol = T::epsilon() * T::from_count(n) * T::lit(10.0) * scale;

    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm <= tol {
            return None;
        }
        let alpha = if a[j][j] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().map(|x| *x * *x).sum::<T>();
        diag[j] = alpha;
        if vnorm2 > T::zero() {
            for col in a.iter_mut().skip(j + 1) {
                let dot = v.iter().zip(&col[j..]).map(|(p, q)| *p * *q).sum::<T>();
                let f = (dot + dot) / vnorm2;
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c = *c - f * *vi;
                }
            }
            let dot = v.iter().zip(&rhs[j..]).map(|(p, q)| *p * *q).sum::<T>();
            let f = (dot + dot) / vnorm2;
            for (c, vi) in rhs[j..].iter_mut().zip(&v) {
                *c = *c - f * *vi;
            }
        }
        a[j][j] = alpha;
    }

    // Back substitution on R (upper triangle stored in a[col][row]).
    let r = |row: usize, col: usize| if row == col { diag[col] } else { a[col][row] };
    let mut b = vec![T::zero(); k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in i + 1..k {
            s = s - r(i, j) * b[j];
        }
        b[i] = s / r(i, i);
    }
    let rss = rhs[k..].iter().map(|v| *v * *v).sum::<T>();

    // (X'X)^{-1} = R^{-1} R^{-T}; diagonal entry i is the squared norm of row i of R^{-1}.
    let mut rinv = vec![vec![T::zero(); k]; k];
    for c in 0..k {
        rinv[c][c] = T::one() / r(c, c);
        for i in (0..c).rev() {
            let mut s = T::zero();
            for j in i + 1..=c {
                s = s + r(i, j) * rinv[j][c];
            }
            rinv[i][c] = -s / r(i, i);
        }
    }
    let inverse_gram_diag = (0..k)
        .map(|i| rinv[i][i..].iter().map(|v| *v * *v).sum::<T>())
        .collect();

    Some(LeastSquares {
        coefficients: b,
        rss,
        inverse_gram_diag,
    })
}
