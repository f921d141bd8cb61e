//! The three template manifolds: the unit interval, the circle `S¹`
//! parameterized by `[0, 1)`, and the sphere `S²` as unit vectors in `R³`.
//!
//! Each template carries the reproducing kernel of its penalized subspace and
//! a basis of the penalty's null space.

use std::fmt;
use std::str::FromStr;

use crate::error::{PmeError, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Gaussian};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    Interval,
    Circle,
    Sphere,
}

impl TemplateKind {
    /// Intrinsic dimension `d`.
    pub fn intrinsic_dim(self) -> usize {
        match self {
            TemplateKind::Interval | TemplateKind::Circle => 1,
            TemplateKind::Sphere => 2,
        }
    }

    /// Dimension `d₀` of the penalty null space.
    pub fn null_dim(self) -> usize {
        match self {
            TemplateKind::Interval => 2,
            TemplateKind::Circle | TemplateKind::Sphere => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Interval => "interval",
            TemplateKind::Circle => "circle",
            TemplateKind::Sphere => "sphere",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = PmeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interval" => Ok(TemplateKind::Interval),
            "circle" => Ok(TemplateKind::Circle),
            "sphere" => Ok(TemplateKind::Sphere),
            other => Err(PmeError::InvalidInput(format!(
                "unknown template '{other}'"
            ))),
        }
    }
}

/// A point of a template: a parameter in `[0, 1]` / `[0, 1)` for the 1-d
/// templates, or a unit 3-vector for the sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemplatePoint<T> {
    Param(T),
    Direction([T; 3]),
}

impl<T: Scalar> TemplatePoint<T> {
    /// Unit vector from arbitrary nonzero coordinates.
    pub fn direction(v: [T; 3]) -> Self {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        TemplatePoint::Direction([v[0] / n, v[1] / n, v[2] / n])
    }

    pub fn param(&self) -> Option<T> {
        match *self {
            TemplatePoint::Param(t) => Some(t),
            TemplatePoint::Direction(_) => None,
        }
    }

    pub fn unit(&self) -> Option<[T; 3]> {
        match *self {
            TemplatePoint::Param(_) => None,
            TemplatePoint::Direction(v) => Some(v),
        }
    }

    /// Coordinates as a flat vector (one entry for 1-d templates, three for the sphere).
    pub fn coords(&self) -> Vec<T> {
        match *self {
            TemplatePoint::Param(t) => vec![t],
            TemplatePoint::Direction(v) => v.to_vec(),
        }
    }

    pub fn validate(&self, kind: TemplateKind) -> Result<()> {
        match (kind, *self) {
            (TemplateKind::Interval, TemplatePoint::Param(t)) => {
                if t >= T::zero() && t <= T::one() {
                    return Ok(());
                }
                Err(PmeError::InvalidPoint(format!(
                    "interval parameter {t} outside [0, 1]"
                )))
            }
            (TemplateKind::Circle, TemplatePoint::Param(t)) => {
                if t >= T::zero() && t < T::one() {
                    return Ok(());
                }
                Err(PmeError::InvalidPoint(format!(
                    "circle parameter {t} outside [0, 1)"
                )))
            }
            (TemplateKind::Sphere, TemplatePoint::Direction(v)) => {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if (n - T::one()).abs() <= T::tol(1e-12) {
                    return Ok(());
                }
                Err(PmeError::InvalidPoint(format!("sphere point has norm {n}")))
            }
            (kind, p) => Err(PmeError::InvalidPoint(format!(
                "{p:?} is not a {kind} point"
            ))),
        }
    }
}

/// Fractional part `u − ⌊u⌋`, always in `[0, 1)`.
#[inline]
pub(crate) fn frac<T: Scalar>(u: T) -> T {
    let f = u - u.floor();
    if f >= T::one() {
        T::zero()
    } else {
        f
    }
}

/// Reproducing kernel `R₁` of the penalized subspace.
pub fn kernel<T: Scalar>(
    kind: TemplateKind,
    a: &TemplatePoint<T>,
    b: &TemplatePoint<T>,
) -> Result<T> {
    a.validate(kind)?;
    b.validate(kind)?;
    Ok(kernel_unchecked(kind, a, b))
}

/// [`kernel`] without validation, for hot loops over already-validated points.
#[inline]
pub(crate) fn kernel_unchecked<T: Scalar>(
    kind: TemplateKind,
    a: &TemplatePoint<T>,
    b: &TemplatePoint<T>,
) -> T {
    match (*a, *b) {
        (TemplatePoint::Param(s), TemplatePoint::Param(t)) => match kind {
            TemplateKind::Interval => interval_kernel(s, t),
            _ => circle_kernel(s, t),
        },
        (TemplatePoint::Direction(s), TemplatePoint::Direction(t)) => {
            sphere_kernel(s[0] * t[0] + s[1] * t[1] + s[2] * t[2])
        }
        _ => T::nan(),
    }
}

#[inline]
pub(crate) fn interval_kernel<T: Scalar>(s: T, t: T) -> T {
    // m³/3 − m²(s+t)/2 + mst with m = min(s, t), written in the ordered pair
    // so that swapping the arguments gives the same bits
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    lo * lo * (hi / T::lit(2.0) - lo / T::lit(6.0))
}

/// `−B₄([s − t]) / 24`, with `B₄(u) = u²(1 − u)² − 1/30`.
#[inline]
pub(crate) fn circle_kernel<T: Scalar>(s: T, t: T) -> T {
    // ordered difference keeps the kernel bitwise symmetric
    let u = if s >= t { frac(s - t) } else { frac(t - s) };
    let w = u * (T::one() - u);
    -(w * w - T::one() / T::lit(30.0)) / T::lit(24.0)
}

/// `(q₂(z) − 1/3) / 4π` for `z = sᵀt`.
#[inline]
pub(crate) fn sphere_kernel<T: Scalar>(z: T) -> T {
    let z = z.max(-T::one()).min(T::one());
    let q = if z > T::one() - T::lit(1e-9) {
        T::lit(0.5)
    } else {
        // √(2/w) = r/w and √(2w³) = w·r with r = √(2w)
        let w = T::one() - z;
        let r = (T::lit(2.0) * w).sqrt();
        let log_term = (T::one() + r / w).ln();
        T::lit(0.5)
            * (log_term * (T::one() - T::lit(4.0) * z + T::lit(3.0) * z * z) - T::lit(3.0) * w * r
                + T::lit(4.0)
                - T::lit(3.0) * z)
    };
    (q - T::one() / T::lit(3.0)) / (T::lit(4.0) * T::PI())
}

/// Gram matrix `K_ij = R₁(m_i, m_j)`.
pub fn gram<T: Scalar>(kind: TemplateKind, knots: &[TemplatePoint<T>]) -> Result<Matrix<T>> {
    if knots.is_empty() {
        return Err(PmeError::Precondition(
            "gram matrix needs at least one knot".into(),
        ));
    }
    for k in knots {
        k.validate(kind)?;
    }
    Ok(gram_unchecked(kind, knots))
}

pub(crate) fn gram_unchecked<T: Scalar>(
    kind: TemplateKind,
    knots: &[TemplatePoint<T>],
) -> Matrix<T> {
    let n = knots.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel_unchecked(kind, &knots[i], &knots[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Null-space basis `φ(m)`: `(1, t)` on the interval, `(1)` otherwise.
pub fn null_basis<T: Scalar>(kind: TemplateKind, m: &TemplatePoint<T>) -> Result<Vec<T>> {
    m.validate(kind)?;
    Ok(null_basis_unchecked(kind, m))
}

#[inline]
pub(crate) fn null_basis_unchecked<T: Scalar>(kind: TemplateKind, m: &TemplatePoint<T>) -> Vec<T> {
    match (kind, m) {
        (TemplateKind::Interval, TemplatePoint::Param(t)) => vec![T::one(), *t],
        _ => vec![T::one()],
    }
}

/// Geodesic distance on the template (arc fraction for the circle, angle for the sphere).
pub fn template_distance<T: Scalar>(
    kind: TemplateKind,
    a: &TemplatePoint<T>,
    b: &TemplatePoint<T>,
) -> Result<T> {
    a.validate(kind)?;
    b.validate(kind)?;
    Ok(distance_unchecked(kind, a, b))
}

#[inline]
pub(crate) fn distance_unchecked<T: Scalar>(
    kind: TemplateKind,
    a: &TemplatePoint<T>,
    b: &TemplatePoint<T>,
) -> T {
    match (*a, *b) {
        (TemplatePoint::Param(s), TemplatePoint::Param(t)) => match kind {
            TemplateKind::Interval => (s - t).abs(),
            _ => {
                let u = frac(s - t);
                u.min(T::one() - u)
            }
        },
        (TemplatePoint::Direction(s), TemplatePoint::Direction(t)) => {
            (s[0] * t[0] + s[1] * t[1] + s[2] * t[2])
                .max(-T::one())
                .min(T::one())
                .acos()
        }
        _ => T::nan(),
    }
}

/// `n` i.i.d. uniform points on the template, reproducible from `seed`.
pub fn uniform_sample<T: Scalar>(kind: TemplateKind, n: usize, seed: u64) -> Vec<TemplatePoint<T>> {
    let mut rng = rng::seeded(seed);
    match kind {
        TemplateKind::Interval | TemplateKind::Circle => (0..n)
            .map(|_| TemplatePoint::Param(T::lit(rng::uniform(&mut rng))))
            .collect(),
        TemplateKind::Sphere => {
            let mut g = Gaussian::new();
            (0..n)
                .map(|_| loop {
                    let v = [g.sample(&mut rng), g.sample(&mut rng), g.sample(&mut rng)];
                    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if n > 1e-12 {
                        break TemplatePoint::Direction([
                            T::lit(v[0] / n),
                            T::lit(v[1] / n),
                            T::lit(v[2] / n),
                        ]);
                    }
                })
                .collect()
        }
    }
}

/// Fibonacci lattice: golden-angle azimuths with `z = (2i + 1)/n − 1`.
pub fn fibonacci_sphere<T: Scalar>(n: usize) -> Vec<[T; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = (2 * i + 1) as f64 / n as f64 - 1.0;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let v = [r * phi.cos(), r * phi.sin(), z];
            let nrm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [T::lit(v[0] / nrm), T::lit(v[1] / nrm), T::lit(v[2] / nrm)]
        })
        .collect()
}

/// Deterministic node set covering the template: a uniform grid on the 1-d
/// templates (endpoint excluded on the circle) and a Fibonacci lattice on the sphere.
pub fn quadrature_nodes<T: Scalar>(kind: TemplateKind, n: usize) -> Vec<TemplatePoint<T>> {
    match kind {
        TemplateKind::Interval => {
            let denom = (n.max(2) - 1) as f64;
            (0..n)
                .map(|i| TemplatePoint::Param(T::lit(i as f64 / denom)))
                .collect()
        }
        TemplateKind::Circle => (0..n)
            .map(|i| TemplatePoint::Param(T::lit(i as f64 / n as f64)))
            .collect(),
        TemplateKind::Sphere => fibonacci_sphere(n)
            .into_iter()
            .map(TemplatePoint::Direction)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(t: f64) -> TemplatePoint<f64> {
        TemplatePoint::Param(t)
    }

    fn b4(u: f64) -> f64 {
        u.powi(4) - 2.0 * u.powi(3) + u * u - 1.0 / 30.0
    }

    #[test]
    fn interval_kernel_values() {
        assert_eq!(
            kernel(TemplateKind::Interval, &p(0.0), &p(0.0)).unwrap(),
            0.0
        );
        // ∫₀¹ (1 − u)² du = 1/3
        assert!(
            (kernel(TemplateKind::Interval, &p(1.0), &p(1.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15
        );
    }

    #[test]
    fn circle_kernel_values() {
        let k0 = kernel(TemplateKind::Circle, &p(0.3), &p(0.3)).unwrap();
        assert!((k0 - 1.0 / 720.0).abs() < 1e-15);
        let kh = kernel(TemplateKind::Circle, &p(0.1), &p(0.6)).unwrap();
        assert!((kh - (-b4(0.5) / 24.0)).abs() < 1e-15);
        assert!((kh + 1.2152778e-3).abs() < 1e-9);
    }

    #[test]
    fn sphere_kernel_values() {
        let n = TemplatePoint::Direction([0.0, 0.0, 1.0]);
        let s = TemplatePoint::Direction([0.0, 0.0, -1.0]);
        let same = kernel(TemplateKind::Sphere, &n, &n).unwrap();
        assert!((same - 1.0 / (24.0 * std::f64::consts::PI)).abs() < 1e-15);
        let q2 = 0.5 * (8.0 * 2f64.ln() - 12.0 + 7.0);
        let anti = kernel(TemplateKind::Sphere, &n, &s).unwrap();
        assert!((anti - (q2 - 1.0 / 3.0) / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((anti + 4.8337e-3).abs() < 5e-7);
    }

    #[test]
    fn sphere_kernel_is_continuous_at_the_branch_switch() {
        let below: f64 = sphere_kernel(1.0 - 1.0001e-9);
        let at = sphere_kernel(1.0);
        assert!((below - at).abs() < 1e-6);
    }

    #[test]
    fn invalid_points_rejected() {
        assert!(kernel(TemplateKind::Interval, &p(1.5), &p(0.0)).is_err());
        assert!(kernel(TemplateKind::Circle, &p(1.0), &p(0.0)).is_err());
        let bad = TemplatePoint::Direction([1.0, 1.0, 0.0]);
        assert!(kernel(TemplateKind::Sphere, &bad, &bad).is_err());
        assert!(kernel(TemplateKind::Sphere, &p(0.5), &p(0.5)).is_err());
    }

    #[test]
    fn gram_examples() {
        let k = gram(TemplateKind::Interval, &[p(1.0)]).unwrap();
        assert!((k[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        let k = gram(TemplateKind::Circle, &[p(0.0), p(0.5)]).unwrap();
        assert!((k[(0, 0)] - 1.0 / 720.0).abs() < 1e-15);
        assert!((k[(0, 1)] + b4(0.5) / 24.0).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
        assert!(gram::<f64>(TemplateKind::Circle, &[]).is_err());
    }

    #[test]
    fn null_basis_examples() {
        assert_eq!(
            null_basis(TemplateKind::Interval, &p(0.25)).unwrap(),
            vec![1.0, 0.25]
        );
        assert_eq!(
            null_basis(TemplateKind::Circle, &p(0.9)).unwrap(),
            vec![1.0]
        );
        let v = TemplatePoint::Direction([0.0, 0.0, 1.0]);
        assert_eq!(null_basis(TemplateKind::Sphere, &v).unwrap(), vec![1.0]);
    }

    #[test]
    fn distances() {
        let d = template_distance(TemplateKind::Interval, &p(0.2), &p(0.7)).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let d = template_distance(TemplateKind::Circle, &p(0.05), &p(0.95)).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        let v = TemplatePoint::<f64>::direction([1.0, 2.0, 3.0]);
        assert!(
            template_distance(TemplateKind::Sphere, &v, &v)
                .unwrap()
                .abs()
                < 1e-7
        );
    }

    #[test]
    fn uniform_samples() {
        let s = uniform_sample::<f64>(TemplateKind::Interval, 10_000, 11);
        let mean = s.iter().map(|x| x.param().unwrap()).sum::<f64>() / 1e4;
        assert!((mean - 0.5).abs() < 0.02);
        let s = uniform_sample::<f64>(TemplateKind::Sphere, 10_000, 11);
        let mut m = [0.0; 3];
        for x in &s {
            let v = x.unit().unwrap();
            for i in 0..3 {
                m[i] += v[i] / 1e4;
            }
        }
        assert!((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt() <= 0.05);
        assert_eq!(
            uniform_sample::<f64>(TemplateKind::Circle, 1, 5),
            uniform_sample::<f64>(TemplateKind::Circle, 1, 5)
        );
    }

    #[test]
    fn fibonacci_lattice() {
        let one = fibonacci_sphere::<f64>(1);
        assert_eq!(one.len(), 1);
        assert!((one[0].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let two = fibonacci_sphere::<f64>(2);
        assert_ne!(two[0], two[1]);
        let pts = fibonacci_sphere::<f64>(1000);
        let nn: Vec<f64> = (0..pts.len())
            .map(|i| {
                (0..pts.len())
                    .filter(|&j| j != i)
                    .map(|j| {
                        (0..3)
                            .map(|c| (pts[i][c] - pts[j][c]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let lo = nn.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nn.iter().copied().fold(0.0, f64::max);
        assert!(lo / hi >= 0.3, "spacing ratio {}", lo / hi);
        assert!(pts
            .iter()
            .all(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12));
    }
}
