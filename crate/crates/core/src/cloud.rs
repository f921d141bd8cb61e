use crate::error::{PmeError, Result};
use crate::linalg::Matrix;
use crate::scalar::{sq_dist, Scalar};

/// `N` observed points in `R^D`, stored as an `N×D` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    points: Matrix<T>,
    /// Free-form provenance, e.g. the generator that produced the cloud.
    pub label: Option<String>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(points: Matrix<T>) -> Result<Self> {
        if points.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(PmeError::InvalidInput(
                "point cloud has non-finite coordinates".into(),
            ));
        }
        Ok(Self {
            points,
            label: None,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// An empty cloud of the given ambient dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            points: Matrix::zeros(0, dim),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        self.points.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.points
    }

    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim()];
        for p in self.iter() {
            for (a, &x) in m.iter_mut().zip(p) {
                *a += x;
            }
        }
        let n = T::from_count(self.len().max(1));
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Sample covariance with `1/N` normalization.
    pub fn covariance(&self) -> Matrix<T> {
        let d = self.dim();
        let mean = self.mean();
        let mut cov = Matrix::zeros(d, d);
        for p in self.iter() {
            for i in 0..d {
                let di = p[i] - mean[i];
                for j in i..d {
                    cov[(i, j)] += di * (p[j] - mean[j]);
                }
            }
        }
        let n = T::from_count(self.len().max(1));
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / n;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }

    /// Largest pairwise Euclidean distance.
    pub fn diameter(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                best = best.max(sq_dist(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, mut f: impl FnMut(&[T]) -> Vec<T>) -> Result<Self> {
        let rows: Vec<Vec<T>> = self.iter().map(&mut f).collect();
        let dim = rows.first().map_or(self.dim(), Vec::len);
        let mut out = Self::new(Matrix::from_vec(rows.len(), dim, rows.concat())?)?;
        out.label = self.label.clone();
        Ok(out)
    }
}
