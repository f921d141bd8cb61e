//! Choosing λ by the coefficient of variation of the conditional squared
//! residual `Φ(λ, m) = E(‖R_λ‖² | M_λ = m)` over the template.

use serde::Serialize;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::pa::{lambda_sweep, PaConfig, PaFit};
use crate::projection::project_all;
use crate::scalar::Scalar;
use crate::spline::squared_residuals;
use crate::templates::{distance_unchecked, uniform_sample, TemplateKind, TemplatePoint};

/// Nadaraya–Watson estimate of `Φ` with a Gaussian kernel in template
/// geodesic distance.
#[derive(Clone, Debug)]
pub struct PhiEstimate<T> {
    pub kind: TemplateKind,
    pub points: Vec<TemplatePoint<T>>,
    pub residuals: Vec<T>,
    pub bandwidth: T,
}

const MIN_PAIRS: usize = 5;
const BANDWIDTH_SUBSET: usize = 1000;

/// Median pairwise template distance times `N^(−1/5)`. Large sets use an
/// evenly strided subset for the median.
pub fn default_bandwidth<T: Scalar>(kind: TemplateKind, points: &[TemplatePoint<T>]) -> T {
    let stride = points.len().div_ceil(BANDWIDTH_SUBSET).max(1);
    let subset: Vec<&TemplatePoint<T>> = points.iter().step_by(stride).collect();
    let mut d = Vec::with_capacity(subset.len() * subset.len() / 2);
    for i in 0..subset.len() {
        for j in (i + 1)..subset.len() {
            d.push(distance_unchecked(kind, subset[i], subset[j]));
        }
    }
    if d.is_empty() {
        return T::one();
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        (d[d.len() / 2 - 1] + d[d.len() / 2]) * T::lit(0.5)
    };
    median * T::from_count(points.len()).powf(T::lit(-0.2))
}

pub fn estimate_phi<T: Scalar>(
    kind: TemplateKind,
    points: Vec<TemplatePoint<T>>,
    residuals: Vec<T>,
    bandwidth: Option<T>,
) -> Result<PhiEstimate<T>> {
    if points.len() != residuals.len() {
        return Err(PmeError::LengthMismatch {
            expected: points.len(),
            got: residuals.len(),
        });
    }
    if points.len() < MIN_PAIRS {
        return Err(PmeError::TooFewPairs(points.len()));
    }
    for m in &points {
        m.validate(kind)?;
    }
    if residuals
        .iter()
        .any(|r| !(r.is_finite() && *r >= T::zero()))
    {
        return Err(PmeError::InvalidInput(
            "squared residuals must be finite and nonnegative".into(),
        ));
    }
    let bandwidth = match bandwidth {
        Some(h) if h > T::zero() && h.is_finite() => h,
        Some(h) => {
            return Err(PmeError::Precondition(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => default_bandwidth(kind, &points),
    };
    // coincident training points make the median zero
    let bandwidth = if bandwidth > T::zero() {
        bandwidth
    } else {
        T::lit(1e-3)
    };
    Ok(PhiEstimate {
        kind,
        points,
        residuals,
        bandwidth,
    })
}

impl<T: Scalar> PhiEstimate<T> {
    /// `Φ̂(m)`. Weights are shifted by the nearest training distance, so far
    /// queries degrade to a nearest-neighbour average instead of 0/0.
    pub fn eval(&self, m: &TemplatePoint<T>) -> T {
        let d2: Vec<T> = self
            .points
            .iter()
            .map(|p| {
                let d = distance_unchecked(self.kind, m, p);
                d * d
            })
            .collect();
        let nearest = d2.iter().copied().fold(T::infinity(), T::min);
        let scale = T::lit(-0.5) / (self.bandwidth * self.bandwidth);
        let (mut num, mut den) = (T::zero(), T::zero());
        for (d, r) in d2.iter().zip(&self.residuals) {
            let w = ((*d - nearest) * scale).exp();
            num += w * *r;
            den += w;
        }
        num / den
    }
}

/// Monte-Carlo mean and variance of `Φ̂(U)` for `U` uniform on the template.
pub fn phi_moments<T: Scalar>(est: &PhiEstimate<T>, n_mc: usize, seed: u64) -> Result<(T, T)> {
    if n_mc < 100 {
        return Err(PmeError::Precondition(format!(
            "n_mc must be at least 100, got {n_mc}"
        )));
    }
    use rayon::prelude::*;
    let samples = uniform_sample::<T>(est.kind, n_mc, seed);
    let values: Vec<T> = samples.par_iter().map(|u| est.eval(u)).collect();
    let n = T::from_count(n_mc);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
    Ok((mean, var.max(T::zero())))
}

/// Discrete inflection of `log mean_phi` against `log λ`: the index with the
/// largest backward second difference, i.e. where the slope grows most.
/// Returns the last index when no positive curvature is present.
pub fn inflection_bound<T: Scalar>(lambdas: &[T], mean_phi: &[T]) -> Result<usize> {
    if lambdas.len() != mean_phi.len() {
        return Err(PmeError::LengthMismatch {
            expected: lambdas.len(),
            got: mean_phi.len(),
        });
    }
    let n = lambdas.len();
    if n < 4 {
        return Err(PmeError::Precondition(format!(
            "inflection rule needs at least 4 grid points, got {n}"
        )));
    }
    let floor = T::lit(1e-300).max(T::min_positive_value());
    let x: Vec<T> = lambdas.iter().map(|l| l.ln()).collect();
    let y: Vec<T> = mean_phi.iter().map(|m| m.max(floor).ln()).collect();
    let slope = |i: usize| (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
    let mut best = n - 1;
    let mut best_val = T::zero();
    let mut max_slope = T::zero();
    for i in 1..n {
        max_slope = max_slope.max(slope(i).abs());
    }
    let tol = T::tol(1e-9) * (T::one() + max_slope);
    for i in 2..n {
        let curv = (slope(i) - slope(i - 1)) / ((x[i] - x[i - 2]) * T::lit(0.5));
        if curv > best_val + tol || (best_val == T::zero() && curv > tol) {
            best = i;
            best_val = curv;
        }
    }
    Ok(best)
}

/// `count` log-spaced values from `min` to `max` inclusive.
pub fn log_grid<T: Scalar>(min: T, max: T, count: usize) -> Result<Vec<T>> {
    if !(min > T::zero() && max >= min && max.is_finite()) {
        return Err(PmeError::Precondition(format!(
            "need 0 < min ≤ max, got [{min}, {max}]"
        )));
    }
    if count == 0 || (count == 1 && max > min) {
        return Err(PmeError::Precondition(format!(
            "cannot span [{min}, {max}] with {count} points"
        )));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    let step = (b - a) / T::lit((count - 1) as f64);
    let mut out: Vec<T> = (0..count)
        .map(|i| (a + step * T::lit(i as f64)).exp())
        .collect();
    out[0] = min;
    out[count - 1] = max;
    Ok(out)
}

/// The λ selection table.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaProfile<T> {
    pub lambdas: Vec<T>,
    /// NaN where the fit failed.
    pub mean_phi: Vec<T>,
    pub sd_phi: Vec<T>,
    pub cv: Vec<T>,
    pub eligible_max_index: usize,
    pub selected_index: usize,
    pub selected_lambda: T,
    /// `(index, reason)` for every λ whose fit failed.
    pub failures: Vec<(usize, String)>,
}

/// Settings of the selection pipeline beyond the fitting config.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectConfig<T> {
    pub n_mc: usize,
    pub seed: u64,
    pub bandwidth: Option<T>,
}

impl<T> Default for SelectConfig<T> {
    fn default() -> Self {
        Self {
            n_mc: 2000,
            seed: 0,
            bandwidth: None,
        }
    }
}

const CV_MEAN_FLOOR: f64 = 1e-15;

fn coefficient_of_variation<T: Scalar>(mean: T, var: T) -> T {
    if mean < T::lit(CV_MEAN_FLOOR) {
        T::zero()
    } else {
        var.sqrt() / mean
    }
}

/// Residual pairs of a fit, taken at the projection under its final map.
pub fn residual_pairs<T: Scalar>(
    fit: &PaFit<T>,
    cloud: &PointCloud<T>,
    cfg: &PaConfig<T>,
) -> Result<(Vec<TemplatePoint<T>>, Vec<T>)> {
    let m = project_all(&fit.map, cloud, &cfg.projection)?;
    let r = squared_residuals(&fit.map, cloud, &m)?;
    Ok((m, r))
}

/// Moments of `Φ̂` for one fit.
pub fn phi_profile_entry<T: Scalar>(
    fit: &PaFit<T>,
    cloud: &PointCloud<T>,
    kind: TemplateKind,
    pa_cfg: &PaConfig<T>,
    sel: &SelectConfig<T>,
) -> Result<(T, T)> {
    let (m, r) = residual_pairs(fit, cloud, pa_cfg)?;
    let est = estimate_phi(kind, m, r, sel.bandwidth)?;
    phi_moments(&est, sel.n_mc, sel.seed)
}

/// Fits every λ, builds the CV profile and picks the CV minimizer among
/// λ up to the inflection bound. Also returns the per-λ fits.
pub fn select_lambda_with_fits<T: Scalar>(
    cloud: &PointCloud<T>,
    kind: TemplateKind,
    pa_cfg: &PaConfig<T>,
    lambdas: &[T],
    sel: &SelectConfig<T>,
) -> Result<(LambdaProfile<T>, Vec<Option<PaFit<T>>>)> {
    if lambdas.len() < 4 {
        return Err(PmeError::Precondition(format!(
            "need at least 4 λ values, got {}",
            lambdas.len()
        )));
    }
    if sel.n_mc < 100 {
        return Err(PmeError::Precondition(format!(
            "n_mc must be at least 100, got {}",
            sel.n_mc
        )));
    }
    let sweep = lambda_sweep(cloud, kind, pa_cfg, lambdas, false)?;
    let n = lambdas.len();
    let nan = T::nan();
    let (mut mean_phi, mut sd_phi, mut cv) = (vec![nan; n], vec![nan; n], vec![nan; n]);
    let mut failures = Vec::new();
    let mut fits = Vec::with_capacity(n);
    for (i, entry) in sweep.into_iter().enumerate() {
        let cfg = PaConfig {
            lambda: entry.lambda,
            ..pa_cfg.clone()
        };
        let moments = entry.outcome.and_then(|fit| {
            let mv = phi_profile_entry(&fit, cloud, kind, &cfg, sel)?;
            Ok((fit, mv))
        });
        match moments {
            Ok((fit, (mean, var))) => {
                mean_phi[i] = mean;
                sd_phi[i] = var.sqrt();
                cv[i] = coefficient_of_variation(mean, var);
                fits.push(Some(fit));
            }
            Err(e) => {
                failures.push((i, e.to_string()));
                fits.push(None);
            }
        }
    }
    let ok: Vec<usize> = (0..n).filter(|&i| !mean_phi[i].is_nan()).collect();
    if ok.len() < 4 {
        return Err(PmeError::Precondition(format!(
            "only {} of {n} fits succeeded; need 4",
            ok.len()
        )));
    }
    let sub_l: Vec<T> = ok.iter().map(|&i| lambdas[i]).collect();
    let sub_m: Vec<T> = ok.iter().map(|&i| mean_phi[i]).collect();
    let eligible_max_index = ok[inflection_bound(&sub_l, &sub_m)?];
    let mut selected_index = ok[0];
    for &i in ok.iter().filter(|&&i| i <= eligible_max_index) {
        if cv[i] < cv[selected_index] {
            selected_index = i;
        }
    }
    let profile = LambdaProfile {
        lambdas: lambdas.to_vec(),
        mean_phi,
        sd_phi,
        cv,
        eligible_max_index,
        selected_index,
        selected_lambda: lambdas[selected_index],
        failures,
    };
    Ok((profile, fits))
}

pub fn select_lambda<T: Scalar>(
    cloud: &PointCloud<T>,
    kind: TemplateKind,
    pa_cfg: &PaConfig<T>,
    lambdas: &[T],
    sel: &SelectConfig<T>,
) -> Result<LambdaProfile<T>> {
    Ok(select_lambda_with_fits(cloud, kind, pa_cfg, lambdas, sel)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(ts: &[f64]) -> Vec<TemplatePoint<f64>> {
        ts.iter().map(|&t| TemplatePoint::Param(t)).collect()
    }

    #[test]
    fn constant_residuals() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let est = estimate_phi(TemplateKind::Circle, params(&ts), vec![0.7; 20], None).unwrap();
        for q in [0.0, 0.33, 0.9] {
            assert!((est.eval(&TemplatePoint::Param(q)) - 0.7).abs() < 1e-14);
        }
        let (mean, var) = phi_moments(&est, 500, 1).unwrap();
        assert!((mean - 0.7).abs() < 1e-14 && var < 1e-28);
    }

    #[test]
    fn too_few_pairs() {
        let r = estimate_phi(
            TemplateKind::Interval,
            params(&[0.1, 0.2, 0.3, 0.4]),
            vec![1.0; 4],
            None,
        );
        assert_eq!(r.unwrap_err(), PmeError::TooFewPairs(4));
    }

    #[test]
    fn sine_squared_on_circle() {
        let n = 2000;
        let ts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r: Vec<f64> = ts
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * t).sin().powi(2))
            .collect();
        // Gaussian smoothing damps cos(4πt) by exp(−(4πh)²/2)
        let est = estimate_phi(TemplateKind::Circle, params(&ts), r.clone(), None).unwrap();
        let h = est.bandwidth;
        let want = 0.5 + 0.5 * (-(4.0 * std::f64::consts::PI * h).powi(2) / 2.0).exp();
        assert!((est.eval(&TemplatePoint::Param(0.25)) - want).abs() < 0.01);
        let narrow = estimate_phi(TemplateKind::Circle, params(&ts), r, Some(0.02)).unwrap();
        assert!((narrow.eval(&TemplatePoint::Param(0.25)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn uniform_moments_of_identity() {
        let n = 4000;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let est =
            estimate_phi(TemplateKind::Interval, params(&ts), ts.clone(), Some(1e-3)).unwrap();
        let (mean, var) = phi_moments(&est, 20_000, 3).unwrap();
        assert!((mean - 0.5).abs() < 0.025);
        assert!((var - 1.0 / 12.0).abs() < 0.05 / 12.0);
    }

    #[test]
    fn inflection_examples() {
        let lambdas: Vec<f64> = (0..8).map(|i| 10f64.powi(i - 9)).collect();
        let linear: Vec<f64> = lambdas.iter().map(|l| l.powf(0.5)).collect();
        assert_eq!(inflection_bound(&lambdas, &linear).unwrap(), 7);
        let step: Vec<f64> = (0..8).map(|i| if i < 5 { 1.0 } else { 10.0 }).collect();
        assert_eq!(inflection_bound(&lambdas, &step).unwrap(), 5);
        assert!(inflection_bound(&lambdas[..3], &step[..3]).is_err());
    }

    #[test]
    fn cv_is_scale_free() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let r: Vec<f64> = ts.iter().map(|t| 0.1 + t * t).collect();
        let a = estimate_phi(TemplateKind::Circle, params(&ts), r.clone(), None).unwrap();
        let b = estimate_phi(
            TemplateKind::Circle,
            params(&ts),
            r.iter().map(|v| v * 37.0).collect(),
            None,
        )
        .unwrap();
        let (ma, va) = phi_moments(&a, 300, 2).unwrap();
        let (mb, vb) = phi_moments(&b, 300, 2).unwrap();
        let (ca, cb) = (
            coefficient_of_variation(ma, va),
            coefficient_of_variation(mb, vb),
        );
        assert!((ca - cb).abs() < 1e-10);
    }
}
