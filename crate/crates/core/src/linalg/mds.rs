use super::{top_eigenpairs, Matrix};
use crate::error::{PmeError, Result};
use crate::scalar::Scalar;

/// Classical (Torgerson) scaling of a distance matrix into `k` dimensions.
///
/// Negative eigenvalues of `−½·J·D²·J` are clamped to zero, so non-Euclidean
/// inputs degrade gracefully instead of failing.
pub fn classical_mds<T: Scalar>(distances: &Matrix<T>, k: usize) -> Result<Matrix<T>> {
    validate(distances)?;
    let n = distances.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, k));
    }
    let sq = Matrix::from_fn(n, n, |i, j| distances[(i, j)] * distances[(i, j)]);
    let row_means: Vec<T> = (0..n)
        .map(|i| sq.row(i).iter().copied().sum::<T>() / T::from_count(n))
        .collect();
    let grand = row_means.iter().copied().sum::<T>() / T::from_count(n);
    let half = T::lit(-0.5);
    let b = Matrix::from_fn(n, n, |i, j| {
        half * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });

    let eig = top_eigenpairs(&b, k)?;
    let mut coords = Matrix::zeros(n, k);
    for c in 0..eig.values.len() {
        let s = eig.values[c].max(T::zero()).sqrt();
        for i in 0..n {
            coords[(i, c)] = eig.vectors[(i, c)] * s;
        }
    }
    for c in 0..k {
        let mean = (0..n).map(|i| coords[(i, c)]).sum::<T>() / T::from_count(n);
        for i in 0..n {
            coords[(i, c)] -= mean;
        }
    }
    Ok(coords)
}

fn validate<T: Scalar>(d: &Matrix<T>) -> Result<()> {
    if !d.is_square() {
        return Err(PmeError::InvalidDistances(format!(
            "{}x{} is not square",
            d.rows(),
            d.cols()
        )));
    }
    if d.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(PmeError::InvalidDistances("non-finite entry".into()));
    }
    if d.as_slice().iter().any(|&x| x < T::zero()) {
        return Err(PmeError::InvalidDistances("negative entry".into()));
    }
    let scale = d.max_abs().max(T::min_positive_value());
    if d.max_asymmetry() > T::tol(1e-10) * scale {
        return Err(PmeError::InvalidDistances("not symmetric".into()));
    }
    if (0..d.rows()).any(|i| d[(i, i)] > T::tol(1e-12) * scale) {
        return Err(PmeError::InvalidDistances("nonzero diagonal".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::sq_dist;

    #[test]
    fn equilateral_triangle() {
        let d = Matrix::<f64>::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let y = classical_mds(&d, 2).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert!((sq_dist(y.row(i), y.row(j)).sqrt() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_points() {
        let d = Matrix::<f64>::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let y = classical_mds(&d, 1).unwrap();
        let mut v = [y[(0, 0)], y[(1, 0)]];
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_entry_rejected() {
        let d = Matrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(matches!(
            classical_mds(&d, 1),
            Err(PmeError::InvalidDistances(_))
        ));
    }

    #[test]
    fn asymmetric_rejected() {
        let d = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            classical_mds(&d, 1),
            Err(PmeError::InvalidDistances(_))
        ));
    }
}
