//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::Scalar;

pub(crate) fn cholesky<T: Scalar>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    Cholesky::new(m.clone())
}

/// log-determinant from a Cholesky factor.
pub(crate) fn log_det<T: Scalar>(chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc + acc
}

/// `log N(x; mean, Σ)` given the Cholesky factor of Σ.
pub(crate) fn gaussian_log_pdf<T: Scalar>(
    x: &DVector<T>,
    mean: &DVector<T>,
    chol: &Cholesky<T, Dyn>,
) -> T {
    let d = x.len();
    let diff = x - mean;
    let maha = diff.dot(&chol.solve(&diff));
    let two_pi = T::two_pi();
    -(T::from_usize_lossy(d) * two_pi.ln() + log_det(chol) + maha) * T::lit(0.5)
}

/// Max-shifted log-sum-exp. Returns `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let neg_inf = -(T::one() / T::zero());
    let max = values
        .iter()
        .copied()
        .fold(neg_inf, |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        return max;
    }
    let mut acc = T::zero();
    for &v in values {
        acc += (v - max).exp();
    }
    max + acc.ln()
}

pub(crate) fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Clamp the eigenvalues of a symmetric matrix from below.
pub(crate) fn floor_eigenvalues<T: Scalar>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return m.clone();
    }
    let clamped = eig.eigenvalues.map(|v| if v < floor { floor } else { v });
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

#[cfg(test)]
pub(crate) fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), |a, b| if b < a { b } else { a })
}

pub(crate) fn all_finite<T: Scalar>(values: impl IntoIterator<Item = T>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}
