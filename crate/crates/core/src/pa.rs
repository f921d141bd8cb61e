//! The projection–adaptation loop.

use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::init::{circular_init, interval_init, spherical_init, IsomapConfig};
use crate::projection::{project_all_with_hints, ProjectionConfig};
use crate::scalar::Scalar;
use crate::spline::{fit_spline, loss, subsample_knots, FitProblem, Loss, SplineMap};
use crate::templates::{quadrature_nodes, TemplateKind, TemplatePoint};

/// How the first projection indices are obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum InitStrategy<T> {
    Interval,
    CircularRaw,
    CircularIsomap,
    SphericalRaw,
    SphericalIsomap,
    Provided(Vec<TemplatePoint<T>>),
}

impl<T> InitStrategy<T> {
    /// The usual strategy for a template: ISOMAP for intervals, raw angles
    /// and directions otherwise.
    pub fn default_for(kind: TemplateKind) -> Self {
        match kind {
            TemplateKind::Interval => InitStrategy::Interval,
            TemplateKind::Circle => InitStrategy::CircularRaw,
            TemplateKind::Sphere => InitStrategy::SphericalRaw,
        }
    }

    fn kind(&self) -> Option<TemplateKind> {
        match self {
            InitStrategy::Interval => Some(TemplateKind::Interval),
            InitStrategy::CircularRaw | InitStrategy::CircularIsomap => Some(TemplateKind::Circle),
            InitStrategy::SphericalRaw | InitStrategy::SphericalIsomap => {
                Some(TemplateKind::Sphere)
            }
            InitStrategy::Provided(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaConfig<T> {
    pub lambda: T,
    pub eps_stop: T,
    pub max_iter: usize,
    pub projection: ProjectionConfig<T>,
    pub init: InitStrategy<T>,
    /// ISOMAP neighbourhood size for the ISOMAP-based inits (auto if `None`).
    pub isomap_k: Option<usize>,
    /// Fit with at most this many kernel sections (see [`subsample_knots`]).
    pub knot_cap: Option<usize>,
    pub knot_seed: u64,
}

impl<T: Scalar> PaConfig<T> {
    pub fn new(kind: TemplateKind, lambda: T) -> Self {
        Self {
            lambda,
            eps_stop: T::lit(1e-5),
            max_iter: 100,
            projection: ProjectionConfig::default(),
            init: InitStrategy::default_for(kind),
            isomap_k: None,
            knot_cap: None,
            knot_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            return Err(PmeError::Precondition(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.eps_stop > T::zero()) {
            return Err(PmeError::Precondition(format!(
                "eps_stop must be positive, got {}",
                self.eps_stop
            )));
        }
        if self.max_iter < 1 {
            return Err(PmeError::Precondition("max_iter must be at least 1".into()));
        }
        self.projection.validate()
    }
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PaRecord<T> {
    pub iter: usize,
    pub fit_error: T,
    pub penalty: T,
    pub total: T,
    /// Relative change of the fitting error; absent for the initial fit.
    pub eps: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaTrace<T> {
    pub records: Vec<PaRecord<T>>,
    pub converged: bool,
    pub iterations_used: usize,
    pub warnings: Vec<String>,
}

impl<T: Scalar> PaTrace<T> {
    pub fn final_record(&self) -> &PaRecord<T> {
        self.records
            .last()
            .expect("trace always holds the initial fit")
    }
}

/// Result of [`pa_fit`]: the last map, its trace and the indices it was fitted at.
#[derive(Clone, Debug)]
pub struct PaFit<T> {
    pub map: SplineMap<T>,
    pub trace: PaTrace<T>,
    pub indices: Vec<TemplatePoint<T>>,
}

pub fn initial_indices<T: Scalar>(
    cloud: &PointCloud<T>,
    kind: TemplateKind,
    cfg: &PaConfig<T>,
) -> Result<Vec<TemplatePoint<T>>> {
    if let Some(k) = cfg.init.kind() {
        if k != kind {
            return Err(PmeError::KindMismatch(format!(
                "{:?} init cannot seed a {kind} template",
                cfg.init
            )));
        }
    }
    let iso = |dim| IsomapConfig {
        k: cfg.isomap_k,
        target_dim: dim,
    };
    match &cfg.init {
        InitStrategy::Interval => interval_init(cloud, &iso(1)),
        InitStrategy::CircularRaw => circular_init(cloud, false, &iso(2)),
        InitStrategy::CircularIsomap => circular_init(cloud, true, &iso(2)),
        InitStrategy::SphericalRaw => spherical_init(cloud, false, &iso(3)),
        InitStrategy::SphericalIsomap => spherical_init(cloud, true, &iso(3)),
        InitStrategy::Provided(indices) => {
            if indices.len() != cloud.len() {
                return Err(PmeError::LengthMismatch {
                    expected: cloud.len(),
                    got: indices.len(),
                });
            }
            for m in indices {
                m.validate(kind)?;
            }
            Ok(indices.clone())
        }
    }
}

fn adapt<T: Scalar>(
    kind: TemplateKind,
    cloud: &PointCloud<T>,
    indices: &[TemplatePoint<T>],
    cfg: &PaConfig<T>,
) -> Result<SplineMap<T>> {
    let problem = FitProblem::new(kind, cloud, indices, cfg.lambda)?;
    match cfg.knot_cap {
        Some(cap) => subsample_knots(&problem, cap, cfg.knot_seed),
        None => fit_spline(&problem),
    }
}

fn record<T: Scalar>(iter: usize, l: Loss<T>, eps: Option<T>) -> Result<PaRecord<T>> {
    if !(l.fit_error.is_finite() && l.penalty.is_finite() && l.total.is_finite()) {
        return Err(PmeError::NonFiniteLoss(iter));
    }
    Ok(PaRecord {
        iter,
        fit_error: l.fit_error,
        penalty: l.penalty,
        total: l.total,
        eps,
    })
}

/// Fits a principal curve or surface by alternating projection and spline
/// adaptation until the relative change of the fitting error drops to
/// `eps_stop` or `max_iter` is reached.
pub fn pa_fit<T: Scalar>(
    cloud: &PointCloud<T>,
    kind: TemplateKind,
    cfg: &PaConfig<T>,
) -> Result<PaFit<T>> {
    cfg.validate()?;
    let n = cloud.len();
    if n < kind.null_dim() + 1 {
        return Err(PmeError::Precondition(format!(
            "{kind} fits need N ≥ {}, got {n}",
            kind.null_dim() + 1
        )));
    }
    if cloud.dim() <= kind.intrinsic_dim() {
        return Err(PmeError::Precondition(format!(
            "ambient dimension {} must exceed the template dimension {}",
            cloud.dim(),
            kind.intrinsic_dim()
        )));
    }
    let floor = zero_floor(cloud);

    let mut fit_indices = initial_indices(cloud, kind, cfg)?;
    let mut map = adapt(kind, cloud, &fit_indices, cfg)?;
    // D(f⁰) is taken at f⁰'s own projection, which also seeds the first refit
    let mut next = project_all_with_hints(&map, cloud, &cfg.projection, &fit_indices)?;
    let mut records = vec![record(0, loss(&map, cloud, &next)?, None)?];
    let mut d_prev = records[0].fit_error;

    let mut eps = cfg.eps_stop + T::one();
    let mut iter = 1;
    while eps > cfg.eps_stop && iter < cfg.max_iter {
        if d_prev <= floor {
            eps = T::zero();
            break;
        }
        let mut candidate = adapt(kind, cloud, &next, cfg)?;
        if cfg.knot_cap.is_some() {
            // a reduced refit need not beat the current map on the new indices
            let old = loss(&map, cloud, &next)?;
            if loss(&candidate, cloud, &next)?.total > old.total {
                candidate = map.clone();
            }
        }
        map = candidate;
        fit_indices = next;
        let l = loss(&map, cloud, &fit_indices)?;
        eps = (l.fit_error - d_prev).abs() / d_prev;
        records.push(record(iter, l, Some(eps))?);
        d_prev = l.fit_error;
        iter += 1;
        if eps > cfg.eps_stop && iter < cfg.max_iter {
            next = project_all_with_hints(&map, cloud, &cfg.projection, &fit_indices)?;
        } else {
            next = fit_indices.clone();
        }
    }
    let converged = eps <= cfg.eps_stop;
    let warnings = bound_warnings(&map, cloud)?;
    let trace = PaTrace {
        iterations_used: records.len() - 1,
        records,
        converged,
        warnings,
    };
    Ok(PaFit {
        map,
        trace,
        indices: fit_indices,
    })
}

/// Fitting errors at or below this are treated as zero by the stopping rule.
fn zero_floor<T: Scalar>(cloud: &PointCloud<T>) -> T {
    let mean = cloud.mean();
    let spread = cloud
        .iter()
        .map(|x| crate::scalar::sq_dist(x, &mean))
        .sum::<T>()
        / T::from_count(cloud.len());
    T::epsilon() * spread.max(T::min_positive_value())
}

/// Reports maps that leave the ball of radius `2·max‖X_i‖`.
fn bound_warnings<T: Scalar>(map: &SplineMap<T>, cloud: &PointCloud<T>) -> Result<Vec<String>> {
    let rad = cloud
        .iter()
        .map(|x| x.iter().map(|v| *v * *v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    let nodes = quadrature_nodes(map.kind(), 400);
    let images = map.eval_many(&nodes)?;
    let peak = (0..images.rows())
        .map(|i| images.row(i).iter().map(|v| *v * *v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    let two = T::lit(2.0);
    Ok(if peak > two * rad {
        vec![format!(
            "fitted map reaches norm {peak}, beyond 2·max‖X‖ = {}",
            two * rad
        )]
    } else {
        Vec::new()
    })
}

/// One λ of a sweep; failures are kept so the sweep can continue.
#[derive(Debug)]
pub struct SweepEntry<T> {
    pub lambda: T,
    pub outcome: Result<PaFit<T>>,
}

/// Runs [`pa_fit`] for each λ. With `warm_start` each run starts from the
/// previous run's final indices.
pub fn lambda_sweep<T: Scalar>(
    cloud: &PointCloud<T>,
    kind: TemplateKind,
    base: &PaConfig<T>,
    lambdas: &[T],
    warm_start: bool,
) -> Result<Vec<SweepEntry<T>>> {
    if lambdas.is_empty() {
        return Err(PmeError::EmptySet);
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) || lambdas.iter().any(|&l| !(l > T::zero())) {
        return Err(PmeError::Precondition(
            "lambdas must be positive and strictly increasing".into(),
        ));
    }
    if !warm_start {
        return Ok(lambdas
            .par_iter()
            .map(|&lambda| {
                let cfg = PaConfig {
                    lambda,
                    ..base.clone()
                };
                SweepEntry {
                    lambda,
                    outcome: pa_fit(cloud, kind, &cfg),
                }
            })
            .collect());
    }
    let mut entries: Vec<SweepEntry<T>> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let init = match entries.last().and_then(|e| e.outcome.as_ref().ok()) {
            Some(prev) => InitStrategy::Provided(prev.indices.clone()),
            None => base.init.clone(),
        };
        let cfg = PaConfig {
            lambda,
            init,
            ..base.clone()
        };
        entries.push(SweepEntry {
            lambda,
            outcome: pa_fit(cloud, kind, &cfg),
        });
    }
    Ok(entries)
}
