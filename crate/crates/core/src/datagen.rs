//! Seeded synthetic point clouds: the curves and surfaces used throughout
//! the experiments, each with its noiseless generating map.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Gaussian};
use crate::templates::{fibonacci_sphere, TemplateKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// `(cos πt, sin πt)`.
    HalfCircle,
    /// `r(t)·(cos 2πt, sin 2πt)` with `r(t) = 1 + 0.3·sin(2πpt)`.
    FlowerBoundary,
    /// Star-shaped closed surface with `r(θ) = 1 + 0.3·cos(pθ)`.
    FlowerSurface,
    /// Unit sphere bent around a ring ("cashew").
    MoonSurface,
    /// `O·(t, sin 2πt, 0)`.
    Sine3D,
    /// `O·(cos 2πt, sin 2πt, 3t)`.
    Helix3D,
    /// `(r cos 2πt, r sin 2πt, sin 3πt)` with `r = 1 + 0.3·sin 10πt`.
    Star1D3D,
    /// `O·g(t)` for the planar moon curve, see [`moon_curve`].
    Moon1D3D,
}

const ALL: [Mechanism; 8] = [
    Mechanism::HalfCircle,
    Mechanism::FlowerBoundary,
    Mechanism::FlowerSurface,
    Mechanism::MoonSurface,
    Mechanism::Sine3D,
    Mechanism::Helix3D,
    Mechanism::Star1D3D,
    Mechanism::Moon1D3D,
];

impl Mechanism {
    pub fn all() -> &'static [Mechanism] {
        &ALL
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::HalfCircle => "half-circle",
            Mechanism::FlowerBoundary => "flower-boundary",
            Mechanism::FlowerSurface => "flower-surface",
            Mechanism::MoonSurface => "moon-surface",
            Mechanism::Sine3D => "sine3d",
            Mechanism::Helix3D => "helix3d",
            Mechanism::Star1D3D => "star1d3d",
            Mechanism::Moon1D3D => "moon1d3d",
        }
    }

    /// The template whose topology matches the generated manifold.
    pub fn template(self) -> TemplateKind {
        match self {
            Mechanism::HalfCircle | Mechanism::Sine3D | Mechanism::Helix3D => {
                TemplateKind::Interval
            }
            Mechanism::FlowerBoundary | Mechanism::Star1D3D | Mechanism::Moon1D3D => {
                TemplateKind::Circle
            }
            Mechanism::FlowerSurface | Mechanism::MoonSurface => TemplateKind::Sphere,
        }
    }

    pub fn ambient_dim(self) -> usize {
        match self {
            Mechanism::HalfCircle | Mechanism::FlowerBoundary => 2,
            _ => 3,
        }
    }

    fn uses_petals(self) -> bool {
        matches!(self, Mechanism::FlowerBoundary | Mechanism::FlowerSurface)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = PmeError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        ALL.iter()
            .copied()
            .find(|m| m.name() == key || m.name().replace('-', "") == key.replace('-', ""))
            .ok_or_else(|| PmeError::UnsupportedMechanism(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub mechanism: Mechanism,
    pub n: usize,
    /// Per-coordinate noise variance.
    pub sigma2: f64,
    pub petals: usize,
    pub seed: u64,
    /// Applied to the noiseless 3-d point before noise is added.
    pub rotation: Option<Matrix<f64>>,
    /// FlowerSurface only: take `(θ, z)` from a Fibonacci lattice instead of
    /// uniform draws.
    pub fibonacci: bool,
}

impl GeneratorSpec {
    pub fn new(mechanism: Mechanism, n: usize, sigma2: f64, seed: u64) -> Self {
        Self {
            mechanism,
            n,
            sigma2,
            petals: 5,
            seed,
            rotation: None,
            fibonacci: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(PmeError::Precondition("n must be at least 1".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(PmeError::Precondition(format!(
                "sigma2 must be finite and ≥ 0, got {}",
                self.sigma2
            )));
        }
        if self.mechanism.uses_petals() && self.petals < 1 {
            return Err(PmeError::Precondition("petals must be at least 1".into()));
        }
        if let Some(o) = &self.rotation {
            if self.mechanism.ambient_dim() != 3 {
                return Err(PmeError::InvalidInput(format!(
                    "{} is planar; rotation needs a 3-d mechanism",
                    self.mechanism
                )));
            }
            check_rotation(o)?;
        }
        if self.fibonacci && self.mechanism != Mechanism::FlowerSurface {
            return Err(PmeError::InvalidInput(
                "the Fibonacci sampler applies to flower-surface only".into(),
            ));
        }
        Ok(())
    }
}

fn check_rotation(o: &Matrix<f64>) -> Result<()> {
    if o.rows() != 3 || o.cols() != 3 {
        return Err(PmeError::InvalidInput("rotation must be 3×3".into()));
    }
    let oto = o.t_matmul(o)?;
    let err = oto.sub(&Matrix::identity(3)).max_abs();
    if err > 1e-10 {
        return Err(PmeError::InvalidInput(format!(
            "rotation is not orthogonal (error {err:e})"
        )));
    }
    Ok(())
}

/// Named parameter sets from the experiments.
pub fn preset(name: &str, seed: u64) -> Result<GeneratorSpec> {
    use Mechanism::*;
    let spec = |m, n, sigma2, petals| GeneratorSpec {
        petals,
        ..GeneratorSpec::new(m, n, sigma2, seed)
    };
    Ok(match name {
        "half-circle-paper" => spec(HalfCircle, 2500, 4e-4, 5),
        "flower-boundary-paper" => spec(FlowerBoundary, 2500, 1e-4, 5),
        "flower-surface-paper" => spec(FlowerSurface, 300, 1e-4, 6),
        "flower-surface-fibonacci" => GeneratorSpec {
            fibonacci: true,
            ..spec(FlowerSurface, 2500, 0.004, 5)
        },
        "moon-surface-paper" => spec(MoonSurface, 300, 1e-4, 5),
        "sine3d-paper" => GeneratorSpec {
            rotation: Some(random_rotation(seed)),
            ..spec(Sine3D, 500, 0.04, 5)
        },
        "helix3d-paper" => GeneratorSpec {
            rotation: Some(random_rotation(seed)),
            ..spec(Helix3D, 500, 0.04, 5)
        },
        "star1d3d-paper" => spec(Star1D3D, 500, 0.04, 5),
        "moon1d3d-paper" => GeneratorSpec {
            rotation: Some(random_rotation(seed)),
            ..spec(Moon1D3D, 500, 0.04, 5)
        },
        _ => {
            return Err(PmeError::UnsupportedMechanism(format!(
                "unknown preset {name}"
            )))
        }
    })
}

pub const PRESETS: [&str; 9] = [
    "half-circle-paper",
    "flower-boundary-paper",
    "flower-surface-paper",
    "flower-surface-fibonacci",
    "moon-surface-paper",
    "sine3d-paper",
    "helix3d-paper",
    "star1d3d-paper",
    "moon1d3d-paper",
];

/// Uniform random rotation: QR of a Gaussian matrix with the sign of `R`'s
/// diagonal folded into `Q`, then a column flip if needed for `det = +1`.
pub fn random_rotation(seed: u64) -> Matrix<f64> {
    let mut rng = rng::substream(seed, 0x5eed);
    let mut g = Gaussian::new();
    let mut cols: Vec<[f64; 3]> = Vec::with_capacity(3);
    while cols.len() < 3 {
        let mut v = [g.sample(&mut rng), g.sample(&mut rng), g.sample(&mut rng)];
        for _ in 0..2 {
            for q in &cols {
                let d = v[0] * q[0] + v[1] * q[1] + v[2] * q[2];
                for k in 0..3 {
                    v[k] -= d * q[k];
                }
            }
        }
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-8 {
            cols.push([v[0] / n, v[1] / n, v[2] / n]);
        }
    }
    let det = cols[0][0] * (cols[1][1] * cols[2][2] - cols[1][2] * cols[2][1])
        - cols[1][0] * (cols[0][1] * cols[2][2] - cols[0][2] * cols[2][1])
        + cols[2][0] * (cols[0][1] * cols[1][2] - cols[0][2] * cols[1][1]);
    if det < 0.0 {
        for v in cols[2].iter_mut() {
            *v = -*v;
        }
    }
    Matrix::from_fn(3, 3, |i, j| cols[j][i])
}

/// Planar moon: two radius-1 half circles offset by 0.6, closed by radius-0.3
/// half circles, parameterized by arc length over `t ∈ [0, 1)`.
pub fn moon_curve(t: f64) -> [f64; 2] {
    const BIG: f64 = 1.0;
    const CAP: f64 = 0.3;
    const GAP: f64 = 0.6;
    let total = 2.0 * PI * BIG + 2.0 * PI * CAP;
    let s = t.rem_euclid(1.0) * total;
    let arc = PI * BIG;
    let cap = PI * CAP;
    if s < arc {
        let a = s / BIG;
        [BIG * a.cos(), BIG * a.sin()]
    } else if s < arc + cap {
        let b = PI / 2.0 + (s - arc) / CAP;
        [-BIG + CAP * b.cos(), -GAP / 2.0 + CAP * b.sin()]
    } else if s < 2.0 * arc + cap {
        let c = PI - (s - arc - cap) / BIG;
        [BIG * c.cos(), -GAP + BIG * c.sin()]
    } else {
        let b = -PI / 2.0 + (s - 2.0 * arc - cap) / CAP;
        [BIG + CAP * b.cos(), -GAP / 2.0 + CAP * b.sin()]
    }
}

/// The noiseless generating map of a mechanism.
///
/// Latents are `[t]` with `t ∈ [0, 1]` for curves and a unit vector
/// `[x, y, z]` for surfaces.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub mechanism: Mechanism,
    pub petals: usize,
    pub rotation: Option<Matrix<f64>>,
}

impl Truth {
    pub fn eval(&self, latent: &[f64]) -> Vec<f64> {
        let p = self.petals as f64;
        let raw = match self.mechanism {
            Mechanism::HalfCircle => {
                let t = latent[0];
                vec![(PI * t).cos(), (PI * t).sin()]
            }
            Mechanism::FlowerBoundary => {
                let t = latent[0];
                let r = 1.0 + 0.3 * (2.0 * PI * p * t).sin();
                vec![r * (2.0 * PI * t).cos(), r * (2.0 * PI * t).sin()]
            }
            Mechanism::FlowerSurface => {
                let v = latent;
                let theta = v[1].atan2(v[0]);
                let r = 1.0 + 0.3 * (p * theta).cos();
                vec![r * v[0], r * v[1], 0.5 * v[2]]
            }
            Mechanism::MoonSurface => {
                const B: f64 = 1.2 * PI;
                const RHO: f64 = 2.0;
                const R: f64 = 1.0;
                let (x, y, z) = (R * latent[0], R * latent[1], R * latent[2]);
                let a = B * x / (2.0 * R);
                vec![a.cos() * (RHO * R + y), a.sin() * (RHO * R + y), z]
            }
            Mechanism::Sine3D => {
                let t = latent[0];
                vec![t, (2.0 * PI * t).sin(), 0.0]
            }
            Mechanism::Helix3D => {
                let t = latent[0];
                vec![(2.0 * PI * t).cos(), (2.0 * PI * t).sin(), 3.0 * t]
            }
            Mechanism::Star1D3D => {
                let t = latent[0];
                let r = 1.0 + 0.3 * (10.0 * PI * t).sin();
                vec![
                    r * (2.0 * PI * t).cos(),
                    r * (2.0 * PI * t).sin(),
                    (3.0 * PI * t).sin(),
                ]
            }
            Mechanism::Moon1D3D => {
                let g = moon_curve(latent[0]);
                vec![g[0], g[1], 0.0]
            }
        };
        match &self.rotation {
            Some(o) => o.matvec(&raw),
            None => raw,
        }
    }

    /// `n` deterministic latents spread over the whole domain.
    pub fn dense_latents(&self, n: usize) -> Vec<Vec<f64>> {
        match self.mechanism.template() {
            TemplateKind::Interval => {
                let denom = (n.max(2) - 1) as f64;
                (0..n).map(|i| vec![i as f64 / denom]).collect()
            }
            TemplateKind::Circle => (0..n).map(|i| vec![i as f64 / n as f64]).collect(),
            TemplateKind::Sphere => fibonacci_sphere::<f64>(n)
                .into_iter()
                .map(|v| v.to_vec())
                .collect(),
        }
    }

    /// Noiseless reference samples of the manifold.
    pub fn dense(&self, n: usize) -> PointCloud<f64> {
        let rows: Vec<Vec<f64>> = self.dense_latents(n).iter().map(|l| self.eval(l)).collect();
        PointCloud::from_rows(&rows).expect("generating maps are finite")
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub cloud: PointCloud<f64>,
    pub latent: Vec<Vec<f64>>,
    pub truth: Truth,
}

fn sphere_from(theta: f64, z: f64) -> Vec<f64> {
    let s = (1.0 - z * z).max(0.0).sqrt();
    vec![theta.cos() * s, theta.sin() * s, z]
}

/// Draws a cloud: i.i.d. uniform latents, then i.i.d. `N(0, σ²)` noise on
/// every coordinate.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let latent: Vec<Vec<f64>> = match spec.mechanism {
        Mechanism::FlowerSurface if spec.fibonacci => fibonacci_sphere::<f64>(spec.n)
            .into_iter()
            .map(|v| v.to_vec())
            .collect(),
        Mechanism::FlowerSurface => (0..spec.n)
            .map(|_| {
                let theta = 2.0 * PI * rng::uniform(&mut rng);
                let z = 2.0 * rng::uniform(&mut rng) - 1.0;
                sphere_from(theta, z)
            })
            .collect(),
        Mechanism::MoonSurface => (0..spec.n)
            .map(|_| {
                let phi = 2.0 * PI * rng::uniform(&mut rng);
                let u = 2.0 * rng::uniform(&mut rng) - 1.0;
                sphere_from(phi, u)
            })
            .collect(),
        _ => (0..spec.n).map(|_| vec![rng::uniform(&mut rng)]).collect(),
    };
    let truth = Truth {
        mechanism: spec.mechanism,
        petals: spec.petals,
        rotation: spec.rotation.clone(),
    };
    let sd = spec.sigma2.sqrt();
    let mut noise = rng::substream(spec.seed, 1);
    let mut g = Gaussian::new();
    let rows: Vec<Vec<f64>> = latent
        .iter()
        .map(|l| {
            let mut x = truth.eval(l);
            if sd > 0.0 {
                for v in x.iter_mut() {
                    *v += sd * g.sample(&mut noise);
                }
            }
            x
        })
        .collect();
    let cloud = PointCloud::from_rows(&rows)?.with_label(spec.mechanism.name());
    Ok(Generated {
        cloud,
        latent,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::sq_dist;

    fn truth(m: Mechanism, petals: usize) -> Truth {
        Truth {
            mechanism: m,
            petals,
            rotation: None,
        }
    }

    #[test]
    fn half_circle_apex() {
        let x = truth(Mechanism::HalfCircle, 5).eval(&[0.5]);
        assert!(x[0].abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flower_boundary_start() {
        assert_eq!(
            truth(Mechanism::FlowerBoundary, 5).eval(&[0.0]),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn presets_match_paper_settings() {
        let f = preset("flower-boundary-paper", 1).unwrap();
        assert_eq!((f.n, f.sigma2, f.petals), (2500, 1e-4, 5));
        assert!(preset("moon-surface-paper", 1).is_ok());
        for name in PRESETS {
            preset(name, 3).unwrap().validate().unwrap();
        }
        assert!(preset("nope", 1).is_err());
    }

    #[test]
    fn mechanism_names_round_trip() {
        for &m in Mechanism::all() {
            assert_eq!(m.name().parse::<Mechanism>().unwrap(), m);
        }
        assert!(matches!(
            "torus".parse::<Mechanism>(),
            Err(PmeError::UnsupportedMechanism(_))
        ));
    }

    #[test]
    fn same_seed_same_cloud() {
        let spec = GeneratorSpec::new(Mechanism::FlowerBoundary, 50, 1e-4, 9);
        assert_eq!(
            generate(&spec).unwrap().cloud,
            generate(&spec).unwrap().cloud
        );
    }

    #[test]
    fn noiseless_clouds_lie_on_truth() {
        for &m in Mechanism::all() {
            let mut spec = GeneratorSpec::new(m, 40, 0.0, 2);
            if m.ambient_dim() == 3 {
                spec.rotation = Some(random_rotation(4));
            }
            let g = generate(&spec).unwrap();
            for (x, l) in g.cloud.iter().zip(&g.latent) {
                assert_eq!(sq_dist(x, &g.truth.eval(l)), 0.0);
            }
        }
    }

    #[test]
    fn rotation_is_proper_orthogonal() {
        for seed in 0..10 {
            let o = random_rotation(seed);
            assert!(o.t_matmul(&o).unwrap().sub(&Matrix::identity(3)).max_abs() < 1e-12);
            let det = o[(0, 0)] * (o[(1, 1)] * o[(2, 2)] - o[(1, 2)] * o[(2, 1)])
                - o[(0, 1)] * (o[(1, 0)] * o[(2, 2)] - o[(1, 2)] * o[(2, 0)])
                + o[(0, 2)] * (o[(1, 0)] * o[(2, 1)] - o[(1, 1)] * o[(2, 0)]);
            assert!((det - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moon_curve_is_closed_and_continuous() {
        let pts: Vec<[f64; 2]> = (0..=2000).map(|i| moon_curve(i as f64 / 2000.0)).collect();
        let step = 2.6 * PI / 2000.0;
        for w in pts.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            assert!(d <= step * (1.0 + 1e-9));
        }
        let (a, b) = (moon_curve(0.0), moon_curve(1.0 - 1e-12));
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn noise_variance() {
        let g = generate(&GeneratorSpec::new(Mechanism::HalfCircle, 20_000, 0.01, 5)).unwrap();
        let mut acc = [0.0; 2];
        for (x, l) in g.cloud.iter().zip(&g.latent) {
            let y = g.truth.eval(l);
            for k in 0..2 {
                acc[k] += (x[k] - y[k]).powi(2);
            }
        }
        for a in acc {
            assert!((a / 20_000.0 - 0.01).abs() < 0.001);
        }
    }

    #[test]
    fn flower_radius_band() {
        let spec = GeneratorSpec::new(Mechanism::FlowerBoundary, 2000, 1e-4, 8);
        let g = generate(&spec).unwrap();
        let inside = g
            .cloud
            .iter()
            .zip(&g.latent)
            .filter(|(x, l)| {
                let r = 1.0 + 0.3 * (2.0 * PI * 5.0 * l[0]).sin();
                ((x[0] * x[0] + x[1] * x[1]).sqrt() - r).abs() <= 4.0 * 1e-2
            })
            .count();
        assert!(inside as f64 >= 0.99 * 2000.0);
    }
}
