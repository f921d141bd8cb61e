//! CSV point clouds, model JSON and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::cloud::PointCloud;
use crate::error::{PmeError, Result};
use crate::linalg::Matrix;
use crate::pa::PaTrace;
use crate::scalar::Scalar;
use crate::spline::SplineMap;
use crate::templates::{TemplateKind, TemplatePoint};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Parses one point per line; a first line whose first token is not a number
/// is taken as a header. Blank lines are skipped.
pub fn parse_cloud_csv<T: Scalar>(text: &str) -> Result<PointCloud<T>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty()
            && lineno == first_content_line(text)
            && fields[0].parse::<f64>().is_err()
        {
            continue;
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map(T::lit).map_err(|_| {
                    PmeError::InvalidInput(format!("line {}: '{f}' is not a number", lineno + 1))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(PmeError::InvalidInput(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PmeError::EmptySet);
    }
    PointCloud::from_rows(&rows)
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty()).unwrap_or(0)
}

pub fn read_cloud_csv<T: Scalar>(path: &Path) -> Result<PointCloud<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| PmeError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_cloud_csv(&text)
}

/// Shortest decimal that parses back to the same float; scientific notation
/// outside `[1e-5, 1e16)`.
pub fn fmt_real<T: Scalar>(x: T) -> String {
    let a = x.abs();
    if x == T::zero() || !x.is_finite() || (a >= T::lit(1e-5) && a < T::lit(1e16)) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Rows of numbers formatted with [`fmt_real`].
pub fn rows_to_csv<T: Scalar>(
    rows: impl IntoIterator<Item = Vec<T>>,
    header: Option<&str>,
) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn cloud_to_csv<T: Scalar>(cloud: &PointCloud<T>) -> String {
    rows_to_csv(cloud.iter().map(|p| p.to_vec()), None)
}

/// Trace table with columns `iter,fit_error,penalty,total,eps`; `eps` is
/// empty for the initial fit.
pub fn trace_to_csv<T: Scalar>(trace: &PaTrace<T>) -> String {
    let mut out = String::from("iter,fit_error,penalty,total,eps\n");
    for r in &trace.records {
        let eps = r.eps.map(fmt_real).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            fmt_real(r.fit_error),
            fmt_real(r.penalty),
            fmt_real(r.total),
            eps
        );
    }
    out
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Seventeen significant digits: enough for any `f64` to round-trip.
fn real(x: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{x:.16e}")).expect("formatted float is valid JSON")
}

#[derive(Serialize)]
struct ModelOut<'a> {
    template: &'a str,
    ambient_dim: usize,
    lambda: Box<RawValue>,
    knots: Vec<Knot>,
    theta: Vec<Vec<Box<RawValue>>>,
    alpha: Vec<Vec<Box<RawValue>>>,
    format_version: u32,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Knot {
    Param(Box<RawValue>),
    Direction([Box<RawValue>; 3]),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KnotIn {
    Param(f64),
    Direction([f64; 3]),
}

#[derive(Deserialize)]
struct ModelIn {
    template: String,
    ambient_dim: usize,
    lambda: f64,
    knots: Vec<KnotIn>,
    theta: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    format_version: u32,
}

fn matrix_out<T: Scalar>(m: &Matrix<T>) -> Vec<Vec<Box<RawValue>>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|v| real(v.as_f64())).collect())
        .collect()
}

pub fn model_to_json<T: Scalar>(map: &SplineMap<T>) -> String {
    let knots = map
        .knots()
        .iter()
        .map(|k| match *k {
            TemplatePoint::Param(t) => Knot::Param(real(t.as_f64())),
            TemplatePoint::Direction(v) => Knot::Direction([
                real(v[0].as_f64()),
                real(v[1].as_f64()),
                real(v[2].as_f64()),
            ]),
        })
        .collect();
    let out = ModelOut {
        template: map.kind().name(),
        ambient_dim: map.ambient_dim(),
        lambda: real(map.lambda().as_f64()),
        knots,
        theta: matrix_out(map.theta()),
        alpha: matrix_out(map.alpha()),
        format_version: MODEL_FORMAT_VERSION,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("model serializes");
    s.push('\n');
    s
}

fn matrix_in<T: Scalar>(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<Matrix<T>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PmeError::InvalidInput(format!(
            "{what} rows must have {cols} entries"
        )));
    }
    Matrix::from_vec(
        rows.len(),
        cols,
        rows.iter().flatten().map(|&v| T::lit(v)).collect(),
    )
}

pub fn model_from_json<T: Scalar>(text: &str) -> Result<SplineMap<T>> {
    let m: ModelIn = serde_json::from_str(text)
        .map_err(|e| PmeError::InvalidInput(format!("model JSON: {e}")))?;
    if m.format_version != MODEL_FORMAT_VERSION {
        return Err(PmeError::InvalidInput(format!(
            "unsupported model format_version {}",
            m.format_version
        )));
    }
    let kind: TemplateKind = m.template.parse()?;
    let knots = m
        .knots
        .iter()
        .map(|k| match (kind, k) {
            (TemplateKind::Sphere, KnotIn::Direction(v)) => Ok(TemplatePoint::Direction([
                T::lit(v[0]),
                T::lit(v[1]),
                T::lit(v[2]),
            ])),
            (TemplateKind::Interval | TemplateKind::Circle, KnotIn::Param(t)) => {
                Ok(TemplatePoint::Param(T::lit(*t)))
            }
            _ => Err(PmeError::InvalidInput(format!(
                "knot shape does not match a {kind} template"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let theta = matrix_in(&m.theta, m.ambient_dim, "theta")?;
    let alpha = matrix_in(&m.alpha, m.ambient_dim, "alpha")?;
    SplineMap::from_parts(kind, knots, alpha, theta, T::lit(m.lambda))
}

pub fn read_model<T: Scalar>(path: &Path) -> Result<SplineMap<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| PmeError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{fit_spline, FitProblem};

    #[test]
    fn header_is_detected() {
        let c: PointCloud<f64> = parse_cloud_csv("x,y\n1,2\n3,4\n").unwrap();
        assert_eq!(c.len(), 2);
        let c: PointCloud<f64> = parse_cloud_csv("1,2\n\n3,4\n").unwrap();
        assert_eq!(c.len(), 2);
        assert!(parse_cloud_csv::<f64>("1,2\n3\n").is_err());
        assert!(parse_cloud_csv::<f64>("1,2\nfoo,4\n").is_err());
        assert_eq!(
            parse_cloud_csv::<f64>("x,y\n").unwrap_err(),
            PmeError::EmptySet
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = PointCloud::from_rows(&[
            vec![0.1, 1.0 / 3.0],
            vec![-2.5e-17, 6.02e23],
            vec![0.0, 1e-300],
        ])
        .unwrap();
        let back: PointCloud<f64> = parse_cloud_csv(&cloud_to_csv(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn model_round_trip_is_exact() {
        let ts = [0.05, 0.2, 0.41, 0.6, 0.77, 0.93];
        let rows: Vec<Vec<f64>> = ts
            .iter()
            .map(|t: &f64| vec![t.cos() / 3.0, (5.0 * t).sin()])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let idx: Vec<_> = ts.iter().map(|&t| TemplatePoint::Param(t)).collect();
        let map = fit_spline(&FitProblem::new(TemplateKind::Circle, &cloud, &idx, 1e-4).unwrap())
            .unwrap();
        let back: SplineMap<f64> = model_from_json(&model_to_json(&map)).unwrap();
        assert_eq!(back, map);
        assert!(model_to_json(&map).contains("\"format_version\": 1"));
    }

    #[test]
    fn sphere_knots_round_trip() {
        let map = SplineMap::from_parts(
            TemplateKind::Sphere,
            vec![TemplatePoint::direction([1.0, 2.0, 3.0])],
            Matrix::from_rows(&[vec![0.5, -0.25, 1.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap(),
            0.01,
        )
        .unwrap();
        let back: SplineMap<f64> = model_from_json(&model_to_json(&map)).unwrap();
        assert_eq!(back, map);
    }
}
