//! Randomized invariants across the library.

use std::f64::consts::PI;

use proptest::prelude::*;

use pme::datagen::random_rotation;
use pme::init::{circular_init, interval_init, IsomapConfig};
use pme::io::{cloud_to_csv, model_from_json, model_to_json, parse_cloud_csv};
use pme::lambda_select::{estimate_phi, log_grid, phi_moments};
use pme::linalg::{classical_mds, eig_sym, pca, solve_spd};
use pme::metrics::{hausdorff, l2_map_distance, Reference};
use pme::pa::{pa_fit, PaConfig};
use pme::projection::{ProjectionConfig, Projector};
use pme::spline::{fit_spline, loss, FitProblem};
use pme::templates::{kernel, quadrature_nodes};
use pme::{Matrix, PointCloud, SplineMap, TemplateKind, TemplatePoint};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn unit(v: [f64; 3]) -> TemplatePoint<f64> {
    TemplatePoint::direction(v)
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    (-1.0..1.0f64, 0.0..2.0 * PI).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        [s * phi.cos(), s * phi.sin(), z]
    })
}

fn point_set(dim: usize) -> impl Strategy<Value = PointCloud<f64>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, dim), 1..50)
        .prop_map(|rows| PointCloud::from_rows(&rows).unwrap())
}

fn rotate(o: &Matrix<f64>, v: [f64; 3]) -> [f64; 3] {
    let r = o.matvec(&v);
    [r[0], r[1], r[2]]
}

/// Random data on distinct sorted template points, fitted at `lambda`.
fn fitted(kind: TemplateKind, ts: &[f64], ys: &[Vec<f64>], lambda: f64) -> (SplineMap<f64>, PointCloud<f64>, Vec<TemplatePoint<f64>>) {
    let idx: Vec<_> = match kind {
        TemplateKind::Sphere => ts
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let z = 2.0 * ((i as f64 + 0.5) / ts.len() as f64) - 1.0;
                let s = (1.0 - z * z).sqrt();
                unit([s * (2.0 * PI * t).cos(), s * (2.0 * PI * t).sin(), z])
            })
            .collect(),
        _ => ts.iter().map(|&t| TemplatePoint::Param(t)).collect(),
    };
    let cloud = PointCloud::from_rows(ys).unwrap();
    let map = fit_spline(&FitProblem::new(kind, &cloud, &idx, lambda).unwrap()).unwrap();
    (map, cloud, idx)
}

fn fit_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
    (8usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), n),
            -6.0..0.0f64,
        )
            .prop_map(|(mut ts, ys, l)| {
                ts.sort_by(f64::total_cmp);
                for i in 1..ts.len() {
                    if ts[i] - ts[i - 1] < 1e-3 {
                        ts[i] = ts[i - 1] + 1e-3;
                    }
                }
                let hi = ts[ts.len() - 1];
                let ts = ts.iter().map(|t| t / (hi + 1e-3)).collect();
                (ts, ys, 10f64.powf(l))
            })
    })
}

fn kinds() -> impl Strategy<Value = TemplateKind> {
    prop_oneof![Just(TemplateKind::Interval), Just(TemplateKind::Circle), Just(TemplateKind::Sphere)]
}

/// Determinant by cofactor expansion along the first row.
fn det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 1 {
        return a[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<f64>> =
                a[1..].iter().map(|r| r.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v).collect()).collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * a[0][j] * det(&minor)
        })
        .sum()
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn spd_solve_residual(n in 1usize..40, seed in 0u64..1000) {
        let g = Matrix::from_fn(n, n, |i, j| (((i * 31 + j * 17 + seed as usize) % 97) as f64 / 97.0) - 0.5);
        let mut a = g.t_matmul(&g).unwrap();
        a.add_diagonal(0.1);
        let b = Matrix::from_fn(n, 2, |i, j| (i + 2 * j) as f64 - 3.0);
        let x = solve_spd(&a, &b).unwrap();
        let r = a.matmul(&x).unwrap().sub(&b);
        prop_assert!(r.max_abs() <= 1e-10 * b.max_abs().max(1.0) * a.max_abs().max(1.0));
    }

    #[test]
    fn eigenvalues_match_trace_and_determinant(
        rows in (1usize..=6).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), n))
    ) {
        let n = rows.len();
        let a = Matrix::from_fn(n, n, |i, j| 0.5 * (rows[i][j] + rows[j][i]));
        let e = eig_sym(&a).unwrap();
        let sum: f64 = e.values.iter().sum();
        prop_assert!((sum - a.trace()).abs() <= 1e-8 * a.trace().abs().max(1.0));
        let prod: f64 = e.values.iter().product();
        let d = det(&a.to_rows());
        prop_assert!((prod - d).abs() <= 1e-8 * d.abs().max(1.0));
    }

    #[test]
    fn pca_components_are_orthonormal(rows in prop::collection::vec(prop::collection::vec(-4.0..4.0f64, 4), 6..40)) {
        let cloud = PointCloud::from_rows(&rows).unwrap();
        prop_assume!(cloud.covariance().max_abs() > 1e-6);
        let p = pca(&cloud, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = p.components[i].iter().zip(&p.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn mds_recovers_planar_distances(pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 3..30)) {
        let n = pts.len();
        let d = Matrix::from_fn(n, n, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
        let y = classical_mds(&d, 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                let e = ((y[(i, 0)] - y[(j, 0)]).powi(2) + (y[(i, 1)] - y[(j, 1)]).powi(2)).sqrt();
                prop_assert!((e - d[(i, j)]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn kernels_are_symmetric_and_periodic(s in 0.0..1.0f64, t in 0.0..1.0f64, a in direction(), b in direction()) {
        for kind in [TemplateKind::Interval, TemplateKind::Circle] {
            let (x, y) = (TemplatePoint::Param(s), TemplatePoint::Param(t));
            prop_assert_eq!(kernel(kind, &x, &y).unwrap(), kernel(kind, &y, &x).unwrap());
        }
        let shifted = kernel(TemplateKind::Circle, &TemplatePoint::Param((s + 1.0).rem_euclid(1.0)), &TemplatePoint::Param(t)).unwrap();
        prop_assert!((shifted - kernel(TemplateKind::Circle, &TemplatePoint::Param(s), &TemplatePoint::Param(t)).unwrap()).abs() <= 1e-15);
        prop_assert_eq!(
            kernel(TemplateKind::Sphere, &unit(a), &unit(b)).unwrap(),
            kernel(TemplateKind::Sphere, &unit(b), &unit(a)).unwrap()
        );
    }

    #[test]
    fn sphere_kernel_is_rotation_invariant(a in direction(), b in direction(), seed in 0u64..500) {
        let o = random_rotation(seed);
        let k0 = kernel(TemplateKind::Sphere, &unit(a), &unit(b)).unwrap();
        let k1 = kernel(TemplateKind::Sphere, &unit(rotate(&o, a)), &unit(rotate(&o, b))).unwrap();
        prop_assert!((k0 - k1).abs() <= 1e-12);
    }

    #[test]
    fn fits_are_stationary_and_null_orthogonal(kind in kinds(), (ts, ys, lambda) in fit_case(), seed in 0u64..1000) {
        let (map, cloud, idx) = fitted(kind, &ts, &ys, lambda);
        prop_assert!(map.null_space_residual().max_abs() <= 1e-8);
        let base = loss(&map, &cloud, &idx).unwrap().total;
        // Perturb (θ, α) along a direction that keeps Tᵀα = 0.
        let n = idx.len();
        let mut alpha = map.alpha().clone();
        let mut theta = map.theta().clone();
        let dir = |i: usize, c: usize| ((((i * 7 + c * 13) as u64 + seed) % 11) as f64 - 5.0) / 5.0;
        let mut pert = Matrix::from_fn(n, 2, dir);
        let basis = pme::templates::null_basis;
        let tmat = Matrix::from_rows(&idx.iter().map(|m| basis(kind, m).unwrap()).collect::<Vec<_>>()).unwrap();
        let proj = solve_spd(&tmat.t_matmul(&tmat).unwrap(), &tmat.t_matmul(&pert).unwrap()).unwrap();
        pert = pert.sub(&tmat.matmul(&proj).unwrap());
        let scale = 1e-3 / pert.frobenius().max(1e-300);
        for i in 0..n {
            for c in 0..2 {
                alpha[(i, c)] += scale * pert[(i, c)];
            }
        }
        for k in 0..theta.rows() {
            theta[(k, 0)] += 1e-3;
        }
        let moved = SplineMap::from_parts(kind, idx.clone(), alpha, theta, lambda).unwrap();
        let after = loss(&moved, &cloud, &idx).unwrap().total;
        prop_assert!(after >= base - 1e-12);
    }

    #[test]
    fn null_space_data_has_no_penalty(kind in kinds(), (ts, _ys, lambda) in fit_case(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let ys: Vec<Vec<f64>> = ts
            .iter()
            .map(|&t| match kind {
                TemplateKind::Interval => vec![a + b * t, b - a * t],
                _ => vec![a, b],
            })
            .collect();
        let (map, _, _) = fitted(kind, &ts, &ys, lambda);
        prop_assert!(pme::spline::penalty(&map) <= 1e-10);
    }

    #[test]
    fn hausdorff_is_a_metric(a in point_set(2), b in point_set(2), c in point_set(2)) {
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
        prop_assert!(ab <= hausdorff(&a, &c).unwrap() + hausdorff(&c, &b).unwrap() + 1e-12);
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 3), 1..20)) {
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let back: PointCloud<f64> = parse_cloud_csv(&cloud_to_csv(&cloud)).unwrap();
        prop_assert_eq!(back, cloud);
    }

    #[test]
    fn model_round_trip(kind in kinds(), (ts, ys, lambda) in fit_case()) {
        let (map, _, _) = fitted(kind, &ts, &ys, lambda);
        let back: SplineMap<f64> = model_from_json(&model_to_json(&map)).unwrap();
        prop_assert_eq!(&back, &map);
        prop_assert_eq!(l2_map_distance(&back, &Reference::Map(&map), 100).unwrap(), 0.0);
    }

    #[test]
    fn log_grid_is_increasing(lo in -12.0..0.0f64, span in 0.1..10.0f64, count in 2usize..30) {
        let g = log_grid(10f64.powf(lo), 10f64.powf(lo + span), count).unwrap();
        prop_assert_eq!(g.len(), count);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn phi_variance_is_nonnegative(rs in prop::collection::vec(0.0..3.0f64, 5..60), seed in 0u64..100) {
        let n = rs.len();
        let pts: Vec<_> = (0..n).map(|i| TemplatePoint::Param(i as f64 / n as f64)).collect();
        let est = estimate_phi(TemplateKind::Circle, pts, rs, None).unwrap();
        let (mean, var) = phi_moments(&est, 200, seed).unwrap();
        prop_assert!(var >= 0.0 && mean >= 0.0);
    }

    #[test]
    fn interval_init_spans_unit_interval(pts in prop::collection::vec(-3.0..3.0f64, 3..40)) {
        let rows: Vec<Vec<f64>> = pts.iter().map(|&t| vec![t, 0.5 * t]).collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        prop_assume!(pts.iter().any(|&t| (t - pts[0]).abs() > 1e-6));
        let init = interval_init(&cloud, &IsomapConfig::auto(1)).unwrap();
        let ts: Vec<f64> = init.iter().map(|m| m.param().unwrap()).collect();
        prop_assert_eq!(ts.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        prop_assert_eq!(ts.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn circular_init_order_ignores_rotation(angles in prop::collection::vec(0.0..1.0f64, 4..40), rot in 0.0..1.0f64) {
        let ring = |shift: f64| -> Vec<f64> {
            let rows: Vec<Vec<f64>> = angles
                .iter()
                .map(|&a| {
                    let t = 2.0 * PI * (a + shift);
                    vec![(1.0 + 0.3 * (3.0 * 2.0 * PI * a).cos()) * t.cos(), (1.0 + 0.3 * (3.0 * 2.0 * PI * a).cos()) * t.sin()]
                })
                .collect();
            let init = circular_init(&PointCloud::from_rows(&rows).unwrap(), false, &IsomapConfig::auto(2)).unwrap();
            init.iter().map(|m| m.param().unwrap()).collect()
        };
        let (a, b) = (ring(0.0), ring(rot));
        prop_assert!(a.iter().chain(&b).all(|&t| (0.0..1.0).contains(&t)));
        // Same cyclic order: the shift between the two sets of angles is constant mod 1.
        let d0 = (b[0] - a[0]).rem_euclid(1.0);
        for (x, y) in a.iter().zip(&b) {
            let d = (y - x).rem_euclid(1.0);
            let gap = (d - d0).abs().min(1.0 - (d - d0).abs());
            prop_assert!(gap < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn projection_is_idempotent(kind in kinds(), (ts, ys, lambda) in fit_case(), q in prop::collection::vec(-3.0..3.0f64, 2)) {
        let (map, _, _) = fitted(kind, &ts, &ys, lambda.max(1e-4));
        let projector = Projector::new(&map, &ProjectionConfig::default()).unwrap();
        let (m, _) = projector.project(&q).unwrap();
        let y = map.eval(&m).unwrap();
        let (m2, d2) = projector.project(&y).unwrap();
        prop_assert!(d2.sqrt() <= 1e-8);
        let y2 = map.eval(&m2).unwrap();
        prop_assert!(y.iter().zip(&y2).all(|(a, b)| (a - b).abs() <= 1e-8));
        prop_assert_eq!(projector.project(&q).unwrap(), (m, projector.project(&q).unwrap().1));
    }

    #[test]
    fn pa_traces_descend_and_repeat(seed in 0u64..1000, lambda_exp in -6.0..-2.0f64) {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + ((i as u64 * 7 + seed) % 13) as f64 / 13.0) / 60.0;
                let r = 1.0 + 0.2 * (3.0 * t).sin() + 0.02 * (((i as u64 * 31 + seed) % 17) as f64 / 17.0 - 0.5);
                vec![r * t.cos(), r * t.sin()]
            })
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let cfg = PaConfig::new(TemplateKind::Circle, 10f64.powf(lambda_exp));
        let a = pa_fit(&cloud, TemplateKind::Circle, &cfg).unwrap();
        let l0 = a.trace.records[0].total;
        for w in a.trace.records.windows(2) {
            prop_assert!(w[1].total <= w[0].total + 1e-8 * l0);
        }
        let b = pa_fit(&cloud, TemplateKind::Circle, &cfg).unwrap();
        prop_assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn large_lambda_approaches_the_mean(kind in prop_oneof![Just(TemplateKind::Circle), Just(TemplateKind::Sphere)], (ts, ys, _l) in fit_case()) {
        let mean = PointCloud::from_rows(&ys).unwrap().mean();
        let nodes = quadrature_nodes(kind, 100);
        let mut prev = f64::INFINITY;
        for lambda in [1e2, 1e4, 1e6] {
            let (map, _, _) = fitted(kind, &ts, &ys, lambda);
            let dev = map
                .eval_many(&nodes)
                .unwrap()
                .to_rows()
                .iter()
                .map(|y| y.iter().zip(&mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            prop_assert!(dev <= prev);
            prev = dev;
        }
        prop_assert!(prev <= 1e-3);
    }
}
