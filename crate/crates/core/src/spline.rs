//! Closed-form penalized regression over a template.
//!
//! For fixed projection indices `m_i` the minimizer of
//! `(1/N)·Σ‖X_i − f(m_i)‖² + λ·‖∇²f‖²` is
//! `f(m) = θᵀφ(m) + αᵀ(R₁(m, m_ℓ))_ℓ` with
//! `θ = (TᵀM⁻¹T)⁻¹TᵀM⁻¹X` and `α = M⁻¹(X − Tθ)`, where `M = K + NλI`.

use rand::seq::index;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng;
use crate::scalar::{dot_fast, Scalar};
use crate::templates::{
    gram_unchecked, kernel_unchecked, null_basis_unchecked, TemplateKind, TemplatePoint,
};

/// A fitted map `f: template → R^D` in representer form.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineMap<T> {
    kind: TemplateKind,
    knots: Vec<TemplatePoint<T>>,
    /// `N×D` kernel coefficients.
    alpha: Matrix<T>,
    /// `d₀×D` null-space coefficients.
    theta: Matrix<T>,
    lambda: T,
}

/// Inputs of one adaptation step.
#[derive(Clone, Copy, Debug)]
pub struct FitProblem<'a, T> {
    pub kind: TemplateKind,
    pub cloud: &'a PointCloud<T>,
    pub indices: &'a [TemplatePoint<T>],
    pub lambda: T,
}

impl<'a, T: Scalar> FitProblem<'a, T> {
    pub fn new(
        kind: TemplateKind,
        cloud: &'a PointCloud<T>,
        indices: &'a [TemplatePoint<T>],
        lambda: T,
    ) -> Result<Self> {
        let problem = Self {
            kind,
            cloud,
            indices,
            lambda,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        if self.indices.len() != self.cloud.len() {
            return Err(PmeError::LengthMismatch {
                expected: self.cloud.len(),
                got: self.indices.len(),
            });
        }
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(PmeError::Precondition(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        for m in self.indices {
            m.validate(self.kind)?;
        }
        Ok(())
    }
}

impl<T: Scalar> SplineMap<T> {
    /// Reassembles a map from stored coefficients (e.g. a saved model).
    pub fn from_parts(
        kind: TemplateKind,
        knots: Vec<TemplatePoint<T>>,
        alpha: Matrix<T>,
        theta: Matrix<T>,
        lambda: T,
    ) -> Result<Self> {
        for k in &knots {
            k.validate(kind)?;
        }
        if alpha.rows() != knots.len() {
            return Err(PmeError::LengthMismatch {
                expected: knots.len(),
                got: alpha.rows(),
            });
        }
        if theta.rows() != kind.null_dim() {
            return Err(PmeError::LengthMismatch {
                expected: kind.null_dim(),
                got: theta.rows(),
            });
        }
        if theta.cols() != alpha.cols() {
            return Err(PmeError::DimensionMismatch(format!(
                "theta has {} columns, alpha has {}",
                theta.cols(),
                alpha.cols()
            )));
        }
        if alpha
            .as_slice()
            .iter()
            .chain(theta.as_slice())
            .any(|x| !x.is_finite())
        {
            return Err(PmeError::InvalidInput("non-finite coefficients".into()));
        }
        Ok(Self {
            kind,
            knots,
            alpha,
            theta,
            lambda,
        })
    }

    /// The map `m ↦ c` for every template point.
    pub fn constant(kind: TemplateKind, value: &[T], lambda: T) -> Self {
        let mut theta = Matrix::zeros(kind.null_dim(), value.len());
        theta.row_mut(0).copy_from_slice(value);
        Self {
            kind,
            knots: Vec::new(),
            alpha: Matrix::zeros(0, value.len()),
            theta,
            lambda,
        }
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn knots(&self) -> &[TemplatePoint<T>] {
        &self.knots
    }

    pub fn alpha(&self) -> &Matrix<T> {
        &self.alpha
    }

    pub fn theta(&self) -> &Matrix<T> {
        &self.theta
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn ambient_dim(&self) -> usize {
        self.theta.cols()
    }

    /// `f(m)`.
    pub fn eval(&self, m: &TemplatePoint<T>) -> Result<Vec<T>> {
        m.validate(self.kind)?;
        let mut out = vec![T::zero(); self.ambient_dim()];
        self.eval_into(m, &mut out);
        Ok(out)
    }

    /// Unvalidated evaluation into a caller buffer.
    pub(crate) fn eval_into(&self, m: &TemplatePoint<T>, out: &mut [T]) {
        let phi = null_basis_unchecked(self.kind, m);
        out.iter_mut().for_each(|o| *o = T::zero());
        for (r, &p) in phi.iter().enumerate() {
            for (o, &th) in out.iter_mut().zip(self.theta.row(r)) {
                *o += p * th;
            }
        }
        for (l, knot) in self.knots.iter().enumerate() {
            let k = kernel_unchecked(self.kind, m, knot);
            for (o, &a) in out.iter_mut().zip(self.alpha.row(l)) {
                *o += k * a;
            }
        }
    }

    /// Evaluates at many points; row `i` of the result is `f(points[i])`.
    pub fn eval_many(&self, points: &[TemplatePoint<T>]) -> Result<Matrix<T>> {
        for m in points {
            m.validate(self.kind)?;
        }
        let mut out = Matrix::zeros(points.len(), self.ambient_dim());
        for (i, m) in points.iter().enumerate() {
            self.eval_into(m, out.row_mut(i));
        }
        Ok(out)
    }

    /// Column-wise `Tᵀα`; zero (to rounding) for exact fits.
    pub fn null_space_residual(&self) -> Matrix<T> {
        let d0 = self.kind.null_dim();
        let mut out = Matrix::zeros(d0, self.ambient_dim());
        for (l, knot) in self.knots.iter().enumerate() {
            let phi = null_basis_unchecked(self.kind, knot);
            for (r, &p) in phi.iter().enumerate() {
                for (o, &a) in out.row_mut(r).iter_mut().zip(self.alpha.row(l)) {
                    *o += p * a;
                }
            }
        }
        out
    }
}

/// Exact representer-theorem solve.
pub fn fit_spline<T: Scalar>(problem: &FitProblem<'_, T>) -> Result<SplineMap<T>> {
    problem.validate()?;
    let kind = problem.kind;
    let n = problem.cloud.len();
    let d0 = kind.null_dim();
    if n < d0 {
        return Err(PmeError::Precondition(format!(
            "need at least {d0} points, got {n}"
        )));
    }
    check_null_rank(kind, problem.indices)?;

    let mut m = gram_unchecked(kind, problem.indices);
    m.add_diagonal(T::from_count(n) * problem.lambda);
    let chol = Cholesky::factor(&m)?;

    let design = null_design(kind, problem.indices);
    let minv_t = chol.solve(&design)?;
    let minv_x = chol.solve(problem.cloud.matrix())?;
    let tmt = design.t_matmul(&minv_t)?;
    let tmx = design.t_matmul(&minv_x)?;
    let tmt = Matrix::from_fn(d0, d0, |i, j| (tmt[(i, j)] + tmt[(j, i)]) * T::lit(0.5));
    let theta = Cholesky::factor(&tmt)
        .map_err(|_| PmeError::RankDeficientDesign)?
        .solve(&tmx)?;
    let alpha = minv_x.sub(&minv_t.matmul(&theta)?);

    if alpha
        .as_slice()
        .iter()
        .chain(theta.as_slice())
        .any(|x| !x.is_finite())
    {
        return Err(PmeError::RankDeficientDesign);
    }
    Ok(SplineMap {
        kind,
        knots: problem.indices.to_vec(),
        alpha,
        theta,
        lambda: problem.lambda,
    })
}

fn check_null_rank<T: Scalar>(kind: TemplateKind, indices: &[TemplatePoint<T>]) -> Result<()> {
    if kind == TemplateKind::Interval {
        let (lo, hi) = indices
            .iter()
            .filter_map(|m| m.param())
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), t| {
                (lo.min(t), hi.max(t))
            });
        if !(hi - lo > T::epsilon()) {
            return Err(PmeError::RankDeficientDesign);
        }
    }
    Ok(())
}

/// `N×d₀` matrix `T_ij = φ_j(m_i)`.
pub(crate) fn null_design<T: Scalar>(kind: TemplateKind, points: &[TemplatePoint<T>]) -> Matrix<T> {
    let d0 = kind.null_dim();
    let mut t = Matrix::zeros(points.len(), d0);
    for (i, m) in points.iter().enumerate() {
        t.row_mut(i).copy_from_slice(&null_basis_unchecked(kind, m));
    }
    t
}

/// Roughness `Σ_j α_jᵀ K α_j`, clamped at zero.
pub fn penalty<T: Scalar>(map: &SplineMap<T>) -> T {
    if map.knots.is_empty() {
        return T::zero();
    }
    let k = gram_unchecked(map.kind, &map.knots);
    let ka = k.matmul(&map.alpha).expect("shapes agree by construction");
    let total: T = (0..map.alpha.rows())
        .map(|i| dot_fast(map.alpha.row(i), ka.row(i)))
        .sum();
    total.max(T::zero())
}

/// Fitting error, penalty and penalized loss of a map at given indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss<T> {
    /// `(1/N)·Σ‖X_i − f(m_i)‖²`.
    pub fit_error: T,
    pub penalty: T,
    /// `fit_error + λ·penalty`.
    pub total: T,
}

pub fn loss<T: Scalar>(
    map: &SplineMap<T>,
    cloud: &PointCloud<T>,
    indices: &[TemplatePoint<T>],
) -> Result<Loss<T>> {
    if indices.len() != cloud.len() {
        return Err(PmeError::LengthMismatch {
            expected: cloud.len(),
            got: indices.len(),
        });
    }
    let fit_error = mean_squared_residual(map, cloud, indices)?;
    let pen = penalty(map);
    Ok(Loss {
        fit_error,
        penalty: pen,
        total: fit_error + map.lambda * pen,
    })
}

pub(crate) fn mean_squared_residual<T: Scalar>(
    map: &SplineMap<T>,
    cloud: &PointCloud<T>,
    indices: &[TemplatePoint<T>],
) -> Result<T> {
    if cloud.is_empty() {
        return Ok(T::zero());
    }
    Ok(squared_residuals(map, cloud, indices)?
        .into_iter()
        .sum::<T>()
        / T::from_count(cloud.len()))
}

/// `‖X_i − f(m_i)‖²` for every point.
pub fn squared_residuals<T: Scalar>(
    map: &SplineMap<T>,
    cloud: &PointCloud<T>,
    indices: &[TemplatePoint<T>],
) -> Result<Vec<T>> {
    if indices.len() != cloud.len() {
        return Err(PmeError::LengthMismatch {
            expected: cloud.len(),
            got: indices.len(),
        });
    }
    if cloud.dim() != map.ambient_dim() {
        return Err(PmeError::DimensionMismatch(format!(
            "cloud is in R^{}, map in R^{}",
            cloud.dim(),
            map.ambient_dim()
        )));
    }
    let mut buf = vec![T::zero(); map.ambient_dim()];
    indices
        .iter()
        .zip(cloud.iter())
        .map(|(m, x)| {
            m.validate(map.kind)?;
            map.eval_into(m, &mut buf);
            Ok(crate::scalar::sq_dist(x, &buf))
        })
        .collect()
}

/// Reduced-basis fit: kernel sections only at `max_knots` randomly chosen
/// indices, while every residual still enters the objective.
///
/// Minimizes `(1/N)·‖X − Tθ − K̃c‖² + λ·cᵀK_cc c` through its normal equations.
/// With `max_knots ≥ N` this is exactly [`fit_spline`].
pub fn subsample_knots<T: Scalar>(
    problem: &FitProblem<'_, T>,
    max_knots: usize,
    seed: u64,
) -> Result<SplineMap<T>> {
    let kind = problem.kind;
    let d0 = kind.null_dim();
    if max_knots < d0 + 1 {
        return Err(PmeError::Precondition(format!(
            "max_knots must be at least {}, got {max_knots}",
            d0 + 1
        )));
    }
    problem.validate()?;
    let n = problem.cloud.len();
    if max_knots >= n {
        return fit_spline(problem);
    }
    check_null_rank(kind, problem.indices)?;

    let mut rng = rng::seeded(seed);
    let mut chosen = index::sample(&mut rng, n, max_knots).into_vec();
    chosen.sort_unstable();
    let mut knots: Vec<TemplatePoint<T>> = Vec::with_capacity(max_knots);
    for &i in &chosen {
        let m = problem.indices[i];
        if !knots.contains(&m) {
            knots.push(m);
        }
    }
    let q = knots.len();
    let p = d0 + q;

    // design Φ = [T | K̃], one row per observation
    let mut phi = Matrix::zeros(n, p);
    for (i, m) in problem.indices.iter().enumerate() {
        let row = phi.row_mut(i);
        row[..d0].copy_from_slice(&null_basis_unchecked(kind, m));
        for (l, knot) in knots.iter().enumerate() {
            row[d0 + l] = kernel_unchecked(kind, m, knot);
        }
    }
    let mut normal = phi.t_matmul(&phi)?;
    let kcc = gram_unchecked(kind, &knots);
    let nl = T::from_count(n) * problem.lambda;
    for a in 0..q {
        for b in 0..q {
            normal[(d0 + a, d0 + b)] += nl * kcc[(a, b)];
        }
    }
    let normal = Matrix::from_fn(p, p, |i, j| (normal[(i, j)] + normal[(j, i)]) * T::lit(0.5));
    let rhs = phi.t_matmul(problem.cloud.matrix())?;
    let coef = Cholesky::factor(&normal)
        .map_err(|_| PmeError::RankDeficientDesign)?
        .solve(&rhs)?;

    let dim = problem.cloud.dim();
    let theta = Matrix::from_fn(d0, dim, |i, j| coef[(i, j)]);
    let alpha = Matrix::from_fn(q, dim, |i, j| coef[(d0 + i, j)]);
    SplineMap::from_parts(kind, knots, alpha, theta, problem.lambda)
}
