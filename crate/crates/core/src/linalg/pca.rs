use super::eig_sym;
use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::scalar::Scalar;

/// Top-`d` principal axes of a cloud.
#[derive(Clone, Debug)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// Orthonormal directions, one per row, by decreasing variance.
    pub components: Vec<Vec<T>>,
    pub variances: Vec<T>,
}

/// Principal components from the `1/N` sample covariance.
pub fn pca<T: Scalar>(cloud: &PointCloud<T>, d: usize) -> Result<Pca<T>> {
    if cloud.len() < 2 {
        return Err(PmeError::Precondition(format!(
            "pca needs N ≥ 2, got {}",
            cloud.len()
        )));
    }
    if d >= cloud.dim() {
        return Err(PmeError::Precondition(format!(
            "pca needs d < D, got d = {d}, D = {}",
            cloud.dim()
        )));
    }
    let cov = cloud.covariance();
    if cov.max_abs() == T::zero() {
        return Err(PmeError::DegenerateCloud("all points coincide".into()));
    }
    let eig = eig_sym(&cov)?;
    Ok(Pca {
        mean: cloud.mean(),
        components: (0..d).map(|i| eig.vector(i)).collect(),
        variances: eig.values[..d].to_vec(),
    })
}
