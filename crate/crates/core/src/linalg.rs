//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::scalar::{lit, Scalar};

/// Which induced matrix norm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixNorm {
    /// Maximum absolute column sum.
    One,
    /// Maximum absolute row sum.
    Inf,
    /// Largest singular value.
    Two,
}

pub fn induced_norm<T: Scalar>(a: &DMatrix<T>, norm: MatrixNorm) -> T {
    match norm {
        MatrixNorm::One => a
            .column_iter()
            .map(|c| c.iter().fold(T::zero(), |acc, &x| acc + x.abs()))
            .fold(T::zero(), |a, b| a.max(b)),
        MatrixNorm::Inf => a
            .row_iter()
            .map(|r| r.iter().fold(T::zero(), |acc, &x| acc + x.abs()))
            .fold(T::zero(), |a, b| a.max(b)),
        MatrixNorm::Two => {
            if a.is_empty() {
                return T::zero();
            }
            a.clone()
                .svd(false, false)
                .singular_values
                .iter()
                .fold(T::zero(), |a, &b| a.max(b))
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Scalar>(a: &DMatrix<T>) -> T {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(T::max_value().unwrap(), |a, &b| a.min(b))
}

/// Returns `(a + aᵀ) / 2`.
pub fn symmetrize<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// Moore–Penrose inverse; singular values below `rel_tol * σ_max` are treated as zero.
pub fn pinv<T: Scalar>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let svd = a.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .fold(T::zero(), |a, &b| a.max(b));
    let cut = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cut && sv > T::zero() {
            let inv = T::one() / sv;
            out += vt.row(k).transpose() * u.column(k).transpose() * inv;
        }
    }
    out
}

/// Numerical rank with the same relative cutoff as [`pinv`].
pub fn rank<T: Scalar>(a: &DMatrix<T>, rel_tol: T) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    sv.iter().filter(|&&s| s > rel_tol * smax && s > T::zero()).count()
}

/// Strict lower triangle stacked column by column: (a21..am1, a32..am2, ..., a_m,m-1).
pub fn vech_below<T: Scalar>(a: &DMatrix<T>) -> Vec<T> {
    let m = a.nrows();
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for j in 0..m {
        for i in j + 1..m {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// `(row, col)` pairs in [`vech_below`] order.
pub fn vech_below_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for j in 0..m {
        for i in j + 1..m {
            out.push((i, j));
        }
    }
    out
}

/// Unit-diagonal symmetric matrix from its strict lower triangle.
pub fn corr_from_vech_below<T: Scalar>(m: usize, v: &[T]) -> DMatrix<T> {
    let mut r = DMatrix::identity(m, m);
    for (&(i, j), &x) in vech_below_pairs(m).iter().zip(v) {
        r[(i, j)] = x;
        r[(j, i)] = x;
    }
    r
}

/// Column-stacked vector of a matrix.
pub fn vec_of<T: Scalar>(a: &DMatrix<T>) -> Vec<T> {
    a.as_slice().to_vec()
}

pub fn outer<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> DMatrix<T> {
    a * b.transpose()
}

/// In-place Cholesky of a small row-major symmetric matrix; returns false if not PD.
///
/// Only the lower triangle (including diagonal) of `l` is meaningful afterwards.
pub(crate) fn cholesky_in_place<T: Scalar>(a: &mut [T], m: usize) -> bool {
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return false;
        }
        let djj = d.sqrt();
        a[j * m + j] = djj;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / djj;
        }
    }
    true
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor stored row-major; `b` is overwritten.
pub(crate) fn cholesky_solve_in_place<T: Scalar>(l: &[T], m: usize, b: &mut [T]) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= l[k * m + i] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
}

/// Inverse of `L Lᵀ` written into `out` (row-major, full symmetric).
pub(crate) fn cholesky_inverse<T: Scalar>(l: &[T], m: usize, out: &mut [T], col: &mut [T]) {
    for j in 0..m {
        col.iter_mut().for_each(|x| *x = T::zero());
        col[j] = T::one();
        cholesky_solve_in_place(l, m, col);
        for i in 0..m {
            out[i * m + j] = col[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_small_matrix() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(induced_norm(&a, MatrixNorm::One), 6.0);
        assert_eq!(induced_norm(&a, MatrixNorm::Inf), 7.0);
        let two = induced_norm(&a, MatrixNorm::Two);
        // largest singular value of [[1,-2],[3,4]]
        let ata = a.transpose() * &a;
        let lmax = SymmetricEigen::new(ata).eigenvalues.max();
        assert!((two - lmax.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn vech_below_ordering() {
        let a = DMatrix::from_fn(3, 3, |i, j| (10 * (i + 1) + j + 1) as f64);
        assert_eq!(vech_below(&a), vec![21.0, 31.0, 32.0]);
        let r = corr_from_vech_below(3, &[0.1, 0.2, 0.3]);
        assert_eq!(r[(2, 1)], 0.3);
        assert_eq!(r[(1, 2)], 0.3);
        assert_eq!(r[(1, 1)], 1.0);
    }

    #[test]
    fn cholesky_helpers_agree_with_nalgebra() {
        let a: [f64; 9] = [4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 2.0];
        let mut l = a;
        assert!(cholesky_in_place(&mut l, 3));
        let mut inv = [0.0; 9];
        let mut col = [0.0; 3];
        cholesky_inverse(&l, 3, &mut inv, &mut col);
        let na = DMatrix::from_row_slice(3, 3, &a).try_inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((inv[i * 3 + j] - na[(i, j)]).abs() < 1e-12);
            }
        }
        let mut bad = [1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut bad, 2));
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv(&a, 1e-10);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-12);
        assert_eq!(rank(&a, 1e-10), 1);
    }
}
