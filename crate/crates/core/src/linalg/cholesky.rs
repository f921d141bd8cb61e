use super::Matrix;
use crate::error::{PmeError, Result};
use crate::scalar::{dot_fast, Scalar};

/// Lower-triangular Cholesky factor `A = L·Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
    jitter: T,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric positive-definite matrix.
    ///
    /// A failed first attempt is retried once with `1e-10·trace(A)/n` added to
    /// the diagonal. A second failure is `NotPositiveDefinite`.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        a.check_symmetric(1e-10)?;
        let n = a.rows();
        if n == 0 {
            return Ok(Self {
                lower: Matrix::zeros(0, 0),
                jitter: T::zero(),
            });
        }
        match factor_plain(a, T::zero()) {
            Ok(lower) => Ok(Self {
                lower,
                jitter: T::zero(),
            }),
            Err(_) => {
                let jitter = T::lit(1e-10) * a.trace().abs() / T::from_count(n);
                let lower = factor_plain(a, jitter)?;
                Ok(Self { lower, jitter })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// Diagonal shift that was needed for the factorization to succeed.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        let l = &self.lower;
        for i in 0..n {
            let s = dot_fast(&l.row(i)[..i], &b[..i]);
            b[i] = (b[i] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `A·S = B` column by column.
    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if b.rows() != self.dim() {
            return Err(PmeError::DimensionMismatch(format!(
                "rhs has {} rows, factor has dimension {}",
                b.rows(),
                self.dim()
            )));
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![T::zero(); b.rows()];
        for j in 0..b.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            out.set_col(j, &col);
        }
        Ok(out)
    }

    /// `log det(A)` of the factored (possibly jittered) matrix.
    pub fn log_det(&self) -> T {
        (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<T>() * T::lit(2.0)
    }
}

fn factor_plain<T: Scalar>(a: &Matrix<T>, shift: T) -> Result<Matrix<T>> {
    let n = a.rows();
    let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].abs())) + shift.abs();
    let floor = T::epsilon() * T::from_count(n) * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j)[..j].to_vec();
        let pivot = a[(j, j)] + shift - dot_fast(&lj, &lj);
        if !(pivot > floor) {
            return Err(PmeError::NotPositiveDefinite {
                row: j,
                pivot: pivot.as_f64(),
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let s = dot_fast(&l.row(i)[..j], &lj);
            l[(i, j)] = (a[(i, j)] - s) / d;
        }
    }
    Ok(l)
}

/// Solves `A·S = B` for symmetric positive-definite `A`.
pub fn solve_spd<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    Cholesky::factor(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_returns_rhs() {
        let b = col(&[1.5, -2.0, 3.25]);
        let s = solve_spd(&Matrix::identity(3), &b).unwrap();
        assert_eq!(s, b);
    }

    #[test]
    fn two_by_two_matches_cramer() {
        // det = 11; x = (1·3 − 1·2)/11, y = (4·2 − 1·1)/11
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let s = solve_spd(&a, &col(&[1.0, 2.0])).unwrap();
        assert!((s[(0, 0)] - 1.0 / 11.0).abs() < 1e-15);
        assert!((s[(1, 0)] - 7.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let err = solve_spd(&a, &col(&[1.0, 1.0])).unwrap_err();
        assert!(matches!(err, PmeError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(
            solve_spd(&a, &col(&[1.0, 1.0])),
            Err(PmeError::NonSymmetric(_))
        ));
    }

    #[test]
    fn singular_psd_gets_jitter() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = Cholesky::factor(&a).unwrap();
        assert!(c.jitter() > 0.0);
    }

    #[test]
    fn works_in_f32() {
        let a = Matrix::from_rows(&[vec![4.0f32, 1.0], vec![1.0, 3.0]]).unwrap();
        let s = solve_spd(&a, &Matrix::from_vec(2, 1, vec![1.0f32, 2.0]).unwrap()).unwrap();
        assert!((s[(1, 0)] - 7.0 / 11.0).abs() < 1e-6);
    }
}
