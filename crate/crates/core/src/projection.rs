//! Projection indices `π_f(x) = argmin_m ‖x − f(m)‖`.
//!
//! One-dimensional templates are searched on a uniform partition and the best
//! cell is refined by golden-section search. On the sphere, Nelder–Mead runs
//! in a tangent chart. Starts come from a precomputed Fibonacci lattice split
//! into cells around Fibonacci seeds: the best lattice node of each cell is a
//! candidate, and the most promising candidates are refined.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::linalg::Matrix;
use crate::scalar::{sq_dist, Scalar};
use crate::spline::SplineMap;
use crate::templates::{fibonacci_sphere, frac, TemplateKind, TemplatePoint};

/// Search settings for [`project_point`] and [`project_all`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionConfig<T> {
    /// Number of partition nodes on `[0, 1]` (or `[0, 1 − ε]` on the circle).
    pub grid_size: usize,
    /// Last circle node sits at `1 − ε`, since 0 and 1 are the same point.
    pub circle_endpoint_eps: T,
    /// Fibonacci seeds for the sphere multistart.
    pub sphere_starts: usize,
    pub sphere_max_iter: usize,
    /// Chart-coordinate tolerance of the final Nelder–Mead polish.
    pub sphere_tol: T,
    /// Size of the lattice whose best node is always a start.
    pub sphere_lattice: usize,
    /// How many of the per-seed candidates get a local search.
    pub sphere_candidates: usize,
}

impl<T: Scalar> Default for ProjectionConfig<T> {
    fn default() -> Self {
        Self {
            grid_size: 1000,
            circle_endpoint_eps: T::lit(1e-6),
            sphere_starts: 16,
            sphere_max_iter: 200,
            sphere_tol: T::lit(1e-10),
            sphere_lattice: 4096,
            sphere_candidates: 2,
        }
    }
}

impl<T: Scalar> ProjectionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(PmeError::Precondition(
                "grid_size must be at least 2".into(),
            ));
        }
        if !(self.circle_endpoint_eps > T::zero() && self.circle_endpoint_eps < T::lit(1e-3)) {
            return Err(PmeError::Precondition(
                "circle_endpoint_eps must lie in (0, 1e-3)".into(),
            ));
        }
        if self.sphere_starts < 1
            || self.sphere_lattice < 1
            || self.sphere_max_iter < 1
            || self.sphere_candidates < 1
        {
            return Err(PmeError::Precondition(
                "sphere search needs at least one start and iteration".into(),
            ));
        }
        if !(self.sphere_tol > T::zero()) {
            return Err(PmeError::Precondition("sphere_tol must be positive".into()));
        }
        Ok(())
    }
}

/// A map prepared for repeated projection: partition (or lattice) images are
/// evaluated once.
pub struct Projector<'a, T> {
    map: &'a SplineMap<T>,
    cfg: ProjectionConfig<T>,
    nodes: Vec<TemplatePoint<T>>,
    images: Matrix<T>,
    /// Seed cell of each sphere lattice node.
    cells: Vec<usize>,
    step: T,
}

impl<'a, T: Scalar> Projector<'a, T> {
    pub fn new(map: &'a SplineMap<T>, cfg: &ProjectionConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let (nodes, cells, step): (Vec<TemplatePoint<T>>, Vec<usize>, T) = match map.kind() {
            TemplateKind::Interval | TemplateKind::Circle => {
                let span = match map.kind() {
                    TemplateKind::Interval => T::one(),
                    _ => T::one() - cfg.circle_endpoint_eps,
                };
                let h = span / T::from_count(cfg.grid_size - 1);
                let nodes = (0..cfg.grid_size)
                    .map(|j| {
                        let t = if j + 1 == cfg.grid_size {
                            span
                        } else {
                            T::from_count(j) * h
                        };
                        TemplatePoint::Param(t)
                    })
                    .collect();
                (nodes, Vec::new(), h)
            }
            TemplateKind::Sphere => {
                let lattice = fibonacci_sphere::<T>(cfg.sphere_lattice);
                let seeds = fibonacci_sphere::<T>(cfg.sphere_starts);
                let cells = lattice
                    .iter()
                    .map(|v| {
                        let mut best = (0, T::neg_infinity());
                        for (c, s) in seeds.iter().enumerate() {
                            let dot = v[0] * s[0] + v[1] * s[1] + v[2] * s[2];
                            if dot > best.1 {
                                best = (c, dot);
                            }
                        }
                        best.0
                    })
                    .collect();
                // typical lattice spacing on the unit sphere
                let step = (T::lit(4.0) * T::PI() / T::from_count(cfg.sphere_lattice)).sqrt();
                (
                    lattice.into_iter().map(TemplatePoint::Direction).collect(),
                    cells,
                    step,
                )
            }
        };
        let images = map.eval_many(&nodes)?;
        Ok(Self {
            map,
            cfg: cfg.clone(),
            nodes,
            images,
            cells,
            step,
        })
    }

    /// Projection index of `x` and its squared distance.
    pub fn project(&self, x: &[T]) -> Result<(TemplatePoint<T>, T)> {
        if x.len() != self.map.ambient_dim() {
            return Err(PmeError::DimensionMismatch(format!(
                "point has dimension {}, map has {}",
                x.len(),
                self.map.ambient_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PmeError::InvalidInput(
                "point has non-finite coordinates".into(),
            ));
        }
        match self.map.kind() {
            TemplateKind::Interval | TemplateKind::Circle => {
                // node search, smallest index wins ties
                let mut best = 0;
                let mut best_d = T::infinity();
                for j in 0..self.nodes.len() {
                    let d = sq_dist(x, self.images.row(j));
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
                Ok(self.refine_1d(x, best, best_d))
            }
            TemplateKind::Sphere => Ok(self.sphere_search(x)),
        }
    }

    fn dist_at(&self, x: &[T], m: &TemplatePoint<T>, buf: &mut [T]) -> T {
        self.map.eval_into(m, buf);
        sq_dist(x, buf)
    }

    fn refine_1d(&self, x: &[T], j: usize, grid_d: T) -> (TemplatePoint<T>, T) {
        let kind = self.map.kind();
        let t0 = self.nodes[j].param().expect("1-d node");
        let last = self.nodes.len() - 1;
        let (lo, hi) = match kind {
            TemplateKind::Interval => {
                let lo = if j == 0 {
                    t0
                } else {
                    self.nodes[j - 1].param().unwrap()
                };
                let hi = if j == last {
                    t0
                } else {
                    self.nodes[j + 1].param().unwrap()
                };
                (lo, hi)
            }
            _ => {
                // unwrapped neighbours; the cell past 1 − ε has width ε
                let lo = if j == 0 {
                    self.nodes[last].param().unwrap() - T::one()
                } else {
                    self.nodes[j - 1].param().unwrap()
                };
                let hi = if j == last {
                    T::one()
                } else {
                    self.nodes[j + 1].param().unwrap()
                };
                (lo, hi)
            }
        };
        let wrap = |t: T| match kind {
            TemplateKind::Interval => TemplatePoint::Param(t.max(T::zero()).min(T::one())),
            _ => TemplatePoint::Param(frac(t)),
        };
        let mut buf = vec![T::zero(); self.map.ambient_dim()];
        let mut f = |t: T| self.dist_at(x, &wrap(t), &mut buf);
        let (t_star, d_star) = golden_section(&mut f, lo, hi, T::tol(1e-10));
        if d_star < grid_d {
            (wrap(t_star), d_star)
        } else {
            (self.nodes[j], grid_d)
        }
    }

    fn sphere_search(&self, x: &[T]) -> (TemplatePoint<T>, T) {
        // best lattice node per seed cell
        let mut cell_best: Vec<(usize, T)> =
            vec![(usize::MAX, T::infinity()); self.cfg.sphere_starts];
        for j in 0..self.nodes.len() {
            let d = sq_dist(x, self.images.row(j));
            let c = &mut cell_best[self.cells[j]];
            if d < c.1 {
                *c = (j, d);
            }
        }
        cell_best.retain(|c| c.0 != usize::MAX);
        cell_best.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });

        let mut buf = vec![T::zero(); self.map.ambient_dim()];
        let coarse_tol = self.step * T::lit(0.05);
        let coarse_iter = self.cfg.sphere_max_iter.min(60);
        let first = self.nodes[cell_best[0].0].unit().expect("sphere node");
        let mut winner = (first, cell_best[0].1);
        for &(j, _) in cell_best.iter().take(self.cfg.sphere_candidates) {
            let start = self.nodes[j].unit().expect("sphere node");
            let (p, d) = chart_nelder_mead(
                |m| self.dist_at(x, &TemplatePoint::Direction(m), &mut buf),
                start,
                self.step,
                coarse_tol,
                coarse_iter,
            );
            if d < winner.1 {
                winner = (p, d);
            }
        }
        let (p, d) = chart_nelder_mead(
            |m| self.dist_at(x, &TemplatePoint::Direction(m), &mut buf),
            winner.0,
            coarse_tol,
            self.cfg.sphere_tol,
            self.cfg.sphere_max_iter,
        );
        if d < winner.1 {
            (TemplatePoint::Direction(p), d)
        } else {
            (TemplatePoint::Direction(winner.0), winner.1)
        }
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`; returns the best point seen.
fn golden_section<T: Scalar>(f: &mut impl FnMut(T) -> T, mut lo: T, mut hi: T, tol: T) -> (T, T) {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while (hi - lo).abs() > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

fn normalize3<T: Scalar>(v: [T; 3]) -> [T; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Orthonormal `(u, w)` spanning the tangent plane at unit `p`.
fn tangent_basis<T: Scalar>(p: [T; 3]) -> ([T; 3], [T; 3]) {
    let axis = (0..3)
        .min_by(|&a, &b| {
            p[a].abs()
                .partial_cmp(&p[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let mut e = [T::zero(); 3];
    e[axis] = T::one();
    let ep = e[0] * p[0] + e[1] * p[1] + e[2] * p[2];
    let u = normalize3([e[0] - ep * p[0], e[1] - ep * p[1], e[2] - ep * p[2]]);
    let w = [
        p[1] * u[2] - p[2] * u[1],
        p[2] * u[0] - p[0] * u[2],
        p[0] * u[1] - p[1] * u[0],
    ];
    (u, w)
}

/// Nelder–Mead on the chart `(a, b) ↦ normalize(p + a·u + b·w)`.
fn chart_nelder_mead<T: Scalar>(
    mut objective: impl FnMut([T; 3]) -> T,
    p: [T; 3],
    step: T,
    xtol: T,
    max_iter: usize,
) -> ([T; 3], T) {
    let (u, w) = tangent_basis(p);
    let lift = |c: [T; 2]| {
        normalize3([
            p[0] + c[0] * u[0] + c[1] * w[0],
            p[1] + c[0] * u[1] + c[1] * w[1],
            p[2] + c[0] * u[2] + c[1] * w[2],
        ])
    };
    let mut f = |c: [T; 2]| objective(lift(c));
    let mut simplex = [[T::zero(), T::zero()], [step, T::zero()], [T::zero(), step]];
    let mut values = [f(simplex[0]), f(simplex[1]), f(simplex[2])];
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        simplex = [simplex[order[0]], simplex[order[1]], simplex[order[2]]];
        values = [values[order[0]], values[order[1]], values[order[2]]];

        let diameter = (1..3)
            .map(|i| {
                ((simplex[i][0] - simplex[0][0]).powi(2) + (simplex[i][1] - simplex[0][1]).powi(2))
                    .sqrt()
            })
            .fold(T::zero(), T::max);
        // past the point where the vertices are indistinguishable in value,
        // further moves are decided by rounding alone
        let flat = values[2] - values[0] <= T::lit(4.0) * T::epsilon() * values[0].abs();
        if diameter <= xtol || flat {
            break;
        }
        let c = [
            (simplex[0][0] + simplex[1][0]) * half,
            (simplex[0][1] + simplex[1][1]) * half,
        ];
        let worst = simplex[2];
        let toward = |s: T| [c[0] + s * (c[0] - worst[0]), c[1] + s * (c[1] - worst[1])];
        let xr = toward(T::one());
        let fr = f(xr);
        if fr < values[0] {
            let xe = toward(two);
            let fe = f(xe);
            if fe < fr {
                simplex[2] = xe;
                values[2] = fe;
            } else {
                simplex[2] = xr;
                values[2] = fr;
            }
            continue;
        }
        if fr < values[1] {
            simplex[2] = xr;
            values[2] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[2] {
            let xc = toward(half);
            (xc, f(xc))
        } else {
            let xc = toward(-half);
            (xc, f(xc))
        };
        if fc < values[2].min(fr) {
            simplex[2] = xc;
            values[2] = fc;
            continue;
        }
        for i in 1..3 {
            simplex[i] = [
                simplex[0][0] + half * (simplex[i][0] - simplex[0][0]),
                simplex[0][1] + half * (simplex[i][1] - simplex[0][1]),
            ];
            values[i] = f(simplex[i]);
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    (lift(simplex[best]), values[best])
}

/// Projection index of a single point.
pub fn project_point<T: Scalar>(
    map: &SplineMap<T>,
    x: &[T],
    cfg: &ProjectionConfig<T>,
) -> Result<TemplatePoint<T>> {
    Ok(Projector::new(map, cfg)?.project(x)?.0)
}

/// Projection indices of every point, in cloud order.
pub fn project_all<T: Scalar>(
    map: &SplineMap<T>,
    cloud: &PointCloud<T>,
    cfg: &ProjectionConfig<T>,
) -> Result<Vec<TemplatePoint<T>>> {
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    check_dims(map, cloud)?;
    let projector = Projector::new(map, cfg)?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| projector.project(cloud.point(i)).map(|(m, _)| m))
        .collect()
}

/// Like [`project_all`], but keeps `hints[i]` whenever it is at least as close
/// as the searched index. Used by the fitting loop so a projection step can
/// never increase the fitting error.
pub fn project_all_with_hints<T: Scalar>(
    map: &SplineMap<T>,
    cloud: &PointCloud<T>,
    cfg: &ProjectionConfig<T>,
    hints: &[TemplatePoint<T>],
) -> Result<Vec<TemplatePoint<T>>> {
    if hints.len() != cloud.len() {
        return Err(PmeError::LengthMismatch {
            expected: cloud.len(),
            got: hints.len(),
        });
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    check_dims(map, cloud)?;
    let projector = Projector::new(map, cfg)?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let x = cloud.point(i);
            let (m, d) = projector.project(x)?;
            let hint = hints[i];
            hint.validate(map.kind())?;
            let mut buf = vec![T::zero(); map.ambient_dim()];
            let dh = projector.dist_at(x, &hint, &mut buf);
            Ok(if dh <= d { hint } else { m })
        })
        .collect()
}

fn check_dims<T: Scalar>(map: &SplineMap<T>, cloud: &PointCloud<T>) -> Result<()> {
    if map.ambient_dim() != cloud.dim() {
        return Err(PmeError::DimensionMismatch(format!(
            "cloud is in R^{}, map in R^{}",
            cloud.dim(),
            map.ambient_dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{fit_spline, FitProblem};

    /// Near-exact unit circle: interpolate 64 samples of (cos 2πt, sin 2πt).
    fn unit_circle_map() -> SplineMap<f64> {
        let ts: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let rows: Vec<Vec<f64>> = ts
            .iter()
            .map(|t| {
                vec![
                    (2.0 * std::f64::consts::PI * t).cos(),
                    (2.0 * std::f64::consts::PI * t).sin(),
                ]
            })
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let idx: Vec<_> = ts.iter().map(|&t| TemplatePoint::Param(t)).collect();
        fit_spline(&FitProblem::new(TemplateKind::Circle, &cloud, &idx, 1e-13).unwrap()).unwrap()
    }

    #[test]
    fn exterior_point_of_circle() {
        let map = unit_circle_map();
        let m = project_point(&map, &[2.0, 0.0], &ProjectionConfig::default()).unwrap();
        let t = m.param().unwrap();
        assert!(t.min(1.0 - t) < 1e-4, "t = {t}");
    }

    #[test]
    fn tie_breaks_to_first_node() {
        let map = SplineMap::constant(TemplateKind::Circle, &[0.5, 0.5], 1.0);
        let m = project_point(&map, &[0.0, 0.0], &ProjectionConfig::default()).unwrap();
        assert_eq!(m, TemplatePoint::Param(0.0));
        let map = SplineMap::constant(TemplateKind::Interval, &[0.5, 0.5], 1.0);
        assert_eq!(
            project_point(&map, &[0.0, 0.0], &ProjectionConfig::default()).unwrap(),
            TemplatePoint::Param(0.0)
        );
    }

    #[test]
    fn point_on_curve_projects_to_itself() {
        let map = unit_circle_map();
        let x = map.eval(&TemplatePoint::Param(0.3)).unwrap();
        let m = project_point(&map, &x, &ProjectionConfig::default()).unwrap();
        let y = map.eval(&m).unwrap();
        assert!(sq_dist(&x, &y).sqrt() < 1e-6);
    }

    #[test]
    fn sphere_exterior_point() {
        // identity-like sphere map from interpolating a lattice of unit vectors
        let pts = fibonacci_sphere::<f64>(200);
        let cloud =
            PointCloud::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
        let idx: Vec<_> = pts.iter().map(|&p| TemplatePoint::Direction(p)).collect();
        let map = fit_spline(&FitProblem::new(TemplateKind::Sphere, &cloud, &idx, 1e-12).unwrap())
            .unwrap();
        let m = project_point(&map, &[0.0, 0.0, 5.0], &ProjectionConfig::default()).unwrap();
        let v = m.unit().unwrap();
        assert!(v[2].min(1.0).acos() < 1e-2, "got {v:?}");
    }

    #[test]
    fn empty_and_identical_clouds() {
        let map = unit_circle_map();
        let empty = PointCloud::<f64>::empty(2);
        assert!(project_all(&map, &empty, &ProjectionConfig::default())
            .unwrap()
            .is_empty());
        let same = PointCloud::from_rows(&vec![vec![0.3, 1.2]; 5]).unwrap();
        let idx = project_all(&map, &same, &ProjectionConfig::default()).unwrap();
        assert!(idx.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn rejects_non_finite_and_bad_config() {
        let map = unit_circle_map();
        assert!(project_point(&map, &[f64::NAN, 0.0], &ProjectionConfig::default()).is_err());
        let cfg = ProjectionConfig {
            grid_size: 1,
            ..ProjectionConfig::default()
        };
        assert!(project_point(&map, &[1.0, 0.0], &cfg).is_err());
    }
}

