//! Distances between fitted maps, point sets and reference manifolds.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::linalg::pca;
use crate::scalar::{sq_dist, Scalar};
use crate::spline::SplineMap;
use crate::templates::{quadrature_nodes, TemplateKind, TemplatePoint};

fn directed<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> T {
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.point(i);
            b.iter().map(|y| sq_dist(x, y)).fold(T::infinity(), T::min)
        })
        .reduce(|| T::zero(), T::max)
        .sqrt()
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(PmeError::EmptySet);
    }
    if a.dim() != b.dim() {
        return Err(PmeError::DimensionMismatch(format!(
            "sets live in R^{} and R^{}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// What a map is compared against in [`l2_map_distance`].
pub enum Reference<'a, T> {
    Map(&'a SplineMap<T>),
    Constant(Vec<T>),
    Function(&'a (dyn Fn(&TemplatePoint<T>) -> Vec<T> + Sync)),
}

/// Root-mean-square pointwise distance over `n_quad` deterministic template
/// nodes (uniform grid on the 1-d templates, Fibonacci lattice on the sphere).
pub fn l2_map_distance<T: Scalar>(
    map: &SplineMap<T>,
    reference: &Reference<'_, T>,
    n_quad: usize,
) -> Result<T> {
    if n_quad < 100 {
        return Err(PmeError::Precondition(format!(
            "n_quad must be at least 100, got {n_quad}"
        )));
    }
    if let Reference::Map(other) = reference {
        if other.kind() != map.kind() {
            return Err(PmeError::KindMismatch(format!(
                "{} map against {} map",
                map.kind(),
                other.kind()
            )));
        }
    }
    let nodes = quadrature_nodes(map.kind(), n_quad);
    let images = map.eval_many(&nodes)?;
    let reference_images = match reference {
        Reference::Map(other) => other.eval_many(&nodes)?.to_rows(),
        Reference::Constant(c) => vec![c.clone(); nodes.len()],
        Reference::Function(f) => nodes.iter().map(|m| f(m)).collect(),
    };
    let mut acc = T::zero();
    for (i, r) in reference_images.iter().enumerate() {
        if r.len() != map.ambient_dim() {
            return Err(PmeError::DimensionMismatch(format!(
                "reference has dimension {}, map {}",
                r.len(),
                map.ambient_dim()
            )));
        }
        acc += sq_dist(images.row(i), r);
    }
    Ok((acc / T::from_count(nodes.len())).sqrt())
}

/// Largest distance from the image of an interval map to the first principal
/// axis (an affine line through the mean) of `cloud`.
pub fn distance_to_pca_line<T: Scalar>(
    map: &SplineMap<T>,
    cloud: &PointCloud<T>,
    n_quad: usize,
) -> Result<T> {
    if map.kind() != TemplateKind::Interval {
        return Err(PmeError::KindMismatch(format!(
            "PCA-line distance needs an interval map, got {}",
            map.kind()
        )));
    }
    if cloud.dim() != map.ambient_dim() {
        return Err(PmeError::DimensionMismatch(format!(
            "cloud in R^{}, map in R^{}",
            cloud.dim(),
            map.ambient_dim()
        )));
    }
    let p = pca(cloud, 1)?;
    let v = &p.components[0];
    let nodes = quadrature_nodes(TemplateKind::Interval, n_quad.max(2));
    let images = map.eval_many(&nodes)?;
    let mut worst = T::zero();
    for i in 0..images.rows() {
        let y: Vec<T> = images
            .row(i)
            .iter()
            .zip(&p.mean)
            .map(|(a, b)| *a - *b)
            .collect();
        let along: T = y.iter().zip(v).map(|(a, b)| *a * *b).sum();
        let perp: T = y
            .iter()
            .zip(v)
            .map(|(a, b)| (*a - along * *b) * (*a - along * *b))
            .sum();
        worst = worst.max(perp.max(T::zero()).sqrt());
    }
    Ok(worst)
}
