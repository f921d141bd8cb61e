//! Initial projection indices: ISOMAP for intervals, angles for circles,
//! normalized directions for spheres.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::linalg::{classical_mds, pca, Matrix};
use crate::scalar::{sq_dist, Scalar};
use crate::templates::{frac, TemplatePoint};

/// ISOMAP settings. `k = None` picks the smallest `k` that connects the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IsomapConfig {
    pub k: Option<usize>,
    pub target_dim: usize,
}

impl IsomapConfig {
    pub fn auto(target_dim: usize) -> Self {
        Self {
            k: None,
            target_dim,
        }
    }
}

/// Per-point neighbour lists sorted by distance, ties by index.
fn sorted_neighbours<T: Scalar>(cloud: &PointCloud<T>) -> Vec<Vec<(usize, T)>> {
    let n = cloud.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let x = cloud.point(i);
            let mut list: Vec<(usize, T)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sq_dist(x, cloud.point(j)).sqrt()))
                .collect();
            list.sort_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            list
        })
        .collect()
}

fn union_edges<T: Scalar>(neighbours: &[Vec<(usize, T)>], k: usize) -> Vec<Vec<(usize, T)>> {
    let n = neighbours.len();
    let mut adj: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, w) in list.iter().take(k) {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
    }
    for list in &mut adj {
        list.sort_by_key(|e| e.0);
        list.dedup_by_key(|e| e.0);
    }
    adj
}

fn is_connected<T>(adj: &[Vec<(usize, T)>]) -> bool {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = adj.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for (i, list) in adj.iter().enumerate() {
        for &(j, _) in list {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
    }
    components <= 1
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 1 || k >= n {
        return Err(PmeError::Precondition(format!(
            "need 1 ≤ k < N, got k = {k}, N = {n}"
        )));
    }
    Ok(())
}

/// Symmetrized k-nearest-neighbour graph: edge `(i, j)` exists when either
/// point is among the other's `k` nearest. Non-edges are `+∞`, the diagonal 0.
pub fn knn_graph<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<Matrix<T>> {
    check_k(k, cloud.len())?;
    let adj = union_edges(&sorted_neighbours(cloud), k);
    Ok(to_dense(&adj))
}

fn to_dense<T: Scalar>(adj: &[Vec<(usize, T)>]) -> Matrix<T> {
    let n = adj.len();
    let mut m = Matrix::from_fn(n, n, |i, j| if i == j { T::zero() } else { T::infinity() });
    for (i, list) in adj.iter().enumerate() {
        for &(j, w) in list {
            m[(i, j)] = w;
        }
    }
    m
}

#[derive(PartialEq)]
struct Entry<T>(T, usize);

impl<T: PartialOrd> Eq for Entry<T> {}

impl<T: PartialOrd> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for Entry<T> {
    // reversed for a min-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then(other.1.cmp(&self.1))
    }
}

fn dijkstra<T: Scalar>(adj: &[Vec<(usize, T)>], source: usize) -> Vec<T> {
    let mut dist = vec![T::infinity(); adj.len()];
    dist[source] = T::zero();
    let mut heap = BinaryHeap::new();
    heap.push(Entry(T::zero(), source));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

fn all_pairs<T: Scalar>(adj: &[Vec<(usize, T)>]) -> Matrix<T> {
    let n = adj.len();
    let rows: Vec<Vec<T>> = (0..n).into_par_iter().map(|s| dijkstra(adj, s)).collect();
    let mut m = Matrix::from_fn(n, n, |i, j| rows[i][j]);
    // symmetrize against rounding in path sums
    for i in 0..n {
        for j in (i + 1)..n {
            let v = m[(i, j)].min(m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// All-pairs shortest paths over a weighted adjacency matrix (`+∞` = no edge).
/// Disconnected pairs come back as `+∞`.
pub fn graph_geodesics<T: Scalar>(adjacency: &Matrix<T>) -> Result<Matrix<T>> {
    if !adjacency.is_square() {
        return Err(PmeError::InvalidDistances("adjacency is not square".into()));
    }
    if adjacency
        .as_slice()
        .iter()
        .any(|&w| w.is_nan() || w < T::zero())
    {
        return Err(PmeError::InvalidDistances(
            "adjacency has negative or NaN weights".into(),
        ));
    }
    let n = adjacency.rows();
    let adj: Vec<Vec<(usize, T)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && adjacency[(i, j)].is_finite())
                .map(|j| (j, adjacency[(i, j)]))
                .collect()
        })
        .collect();
    Ok(all_pairs(&adj))
}

/// The neighbourhood size ISOMAP would use: `cfg.k`, or the smallest
/// connecting `k`.
pub fn isomap_k<T: Scalar>(cloud: &PointCloud<T>, cfg: &IsomapConfig) -> Result<usize> {
    let n = cloud.len();
    if let Some(k) = cfg.k {
        check_k(k, n)?;
        return Ok(k);
    }
    if n < 2 {
        return Err(PmeError::Precondition(
            "ISOMAP needs at least 2 points".into(),
        ));
    }
    let neighbours = sorted_neighbours(cloud);
    smallest_connecting_k(&neighbours)
}

fn smallest_connecting_k<T: Scalar>(neighbours: &[Vec<(usize, T)>]) -> Result<usize> {
    let n = neighbours.len();
    if !is_connected(&union_edges(neighbours, n - 1)) {
        return Err(PmeError::Disconnected);
    }
    // connectivity is monotone in k
    let (mut lo, mut hi) = (1, n - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if is_connected(&union_edges(neighbours, mid)) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// ISOMAP embedding: kNN graph, shortest paths, classical scaling.
pub fn isomap<T: Scalar>(cloud: &PointCloud<T>, cfg: &IsomapConfig) -> Result<Matrix<T>> {
    let n = cloud.len();
    if !(1..=3).contains(&cfg.target_dim) {
        return Err(PmeError::Precondition(format!(
            "target_dim must be 1, 2 or 3, got {}",
            cfg.target_dim
        )));
    }
    if n < cfg.target_dim + 1 {
        return Err(PmeError::Precondition(format!(
            "ISOMAP to {} dims needs N ≥ {}",
            cfg.target_dim,
            cfg.target_dim + 1
        )));
    }
    let neighbours = sorted_neighbours(cloud);
    let k = match cfg.k {
        Some(k) => {
            check_k(k, n)?;
            k
        }
        None => smallest_connecting_k(&neighbours)?,
    };
    let adj = union_edges(&neighbours, k);
    let geo = all_pairs(&adj);
    if geo.as_slice().iter().any(|d| !d.is_finite()) {
        return Err(PmeError::Disconnected);
    }
    classical_mds(&geo, cfg.target_dim)
}

fn all_identical<T: Scalar>(cloud: &PointCloud<T>) -> bool {
    let first = cloud.point(0);
    cloud.iter().all(|p| p == first)
}

fn require_points<T: Scalar>(cloud: &PointCloud<T>, min: usize) -> Result<()> {
    if cloud.len() < min {
        return Err(PmeError::Precondition(format!(
            "need at least {min} points, got {}",
            cloud.len()
        )));
    }
    if all_identical(cloud) {
        return Err(PmeError::DegenerateCloud("all points coincide".into()));
    }
    Ok(())
}

/// 1-d ISOMAP coordinates rescaled so that the extremes land on 0 and 1.
pub fn interval_init<T: Scalar>(
    cloud: &PointCloud<T>,
    cfg: &IsomapConfig,
) -> Result<Vec<TemplatePoint<T>>> {
    require_points(cloud, 2)?;
    let y = isomap(
        cloud,
        &IsomapConfig {
            target_dim: 1,
            ..*cfg
        },
    )?
    .col(0);
    let lo = y.iter().copied().fold(T::infinity(), T::min);
    let hi = y.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return Err(PmeError::DegenerateCloud(
            "ISOMAP coordinates are constant".into(),
        ));
    }
    Ok(y.into_iter()
        .map(|v| {
            TemplatePoint::Param(if v == hi {
                T::one()
            } else {
                (v - lo) / (hi - lo)
            })
        })
        .collect())
}

/// Low-dimensional coordinates for the angular inits: ISOMAP, the raw cloud
/// when it already has `dim` coordinates, or its top principal plane/space.
fn embed<T: Scalar>(
    cloud: &PointCloud<T>,
    dim: usize,
    use_isomap: bool,
    cfg: &IsomapConfig,
) -> Result<Vec<Vec<T>>> {
    if use_isomap {
        return Ok(isomap(
            cloud,
            &IsomapConfig {
                target_dim: dim,
                ..*cfg
            },
        )?
        .to_rows());
    }
    match cloud.dim().cmp(&dim) {
        Ordering::Equal => Ok(cloud.matrix().to_rows()),
        Ordering::Less => Err(PmeError::Precondition(format!(
            "cloud is {}-dimensional, need at least {dim} coordinates",
            cloud.dim()
        ))),
        Ordering::Greater => {
            let p = pca(cloud, dim)?;
            Ok(cloud
                .iter()
                .map(|x| {
                    p.components
                        .iter()
                        .map(|c| {
                            c.iter()
                                .zip(x)
                                .zip(&p.mean)
                                .map(|((&ci, &xi), &mi)| ci * (xi - mi))
                                .sum()
                        })
                        .collect()
                })
                .collect())
        }
    }
}

/// Center, and nudge exact zeros by `1e-12·e₁`.
fn center<T: Scalar>(rows: &mut [Vec<T>]) {
    let n = T::from_count(rows.len());
    let dim = rows[0].len();
    let mean: Vec<T> = (0..dim)
        .map(|c| rows.iter().map(|r| r[c]).sum::<T>() / n)
        .collect();
    for r in rows.iter_mut() {
        for (v, m) in r.iter_mut().zip(&mean) {
            *v -= *m;
        }
        if r.iter().all(|&v| v == T::zero()) {
            r[0] = T::lit(1e-12);
        }
    }
}

/// Angle of each (embedded, centered) point divided by `2π`, in `[0, 1)`.
pub fn circular_init<T: Scalar>(
    cloud: &PointCloud<T>,
    use_isomap: bool,
    cfg: &IsomapConfig,
) -> Result<Vec<TemplatePoint<T>>> {
    require_points(cloud, 3)?;
    let mut rows = embed(cloud, 2, use_isomap, cfg)?;
    center(&mut rows);
    let two_pi = T::lit(2.0) * T::PI();
    Ok(rows
        .iter()
        .map(|r| {
            let t = frac(r[1].atan2(r[0]) / two_pi);
            TemplatePoint::Param(if t >= T::one() { T::zero() } else { t })
        })
        .collect())
}

/// Direction of each (embedded, centered) point.
pub fn spherical_init<T: Scalar>(
    cloud: &PointCloud<T>,
    use_isomap: bool,
    cfg: &IsomapConfig,
) -> Result<Vec<TemplatePoint<T>>> {
    require_points(cloud, 4)?;
    let mut rows = embed(cloud, 3, use_isomap, cfg)?;
    center(&mut rows);
    Ok(rows
        .iter()
        .map(|r| TemplatePoint::direction([r[0], r[1], r[2]]))
        .collect())
}
