//! Principal manifold estimation.
//!
//! A smooth curve or surface is fitted to a noisy point cloud in `R^D` by
//! alternating nearest-point projection onto the current fit with a
//! closed-form penalized spline solve over a template manifold (`[0, 1]`,
//! `S¹` or `S²`). The roughness weight `λ` can be chosen automatically by
//! minimizing the coefficient of variation of the conditional squared
//! residual.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below cover the usual case.

pub mod cli;
pub mod cloud;
pub mod datagen;
pub mod error;
pub mod init;
pub mod io;
pub mod lambda_select;
pub mod linalg;
pub mod metrics;
pub mod pa;
pub mod projection;
pub mod rng;
pub mod scalar;
pub mod spline;
pub mod templates;

pub use cloud::PointCloud;
pub use error::{PmeError, Result};
pub use lambda_select::LambdaProfile;
pub use linalg::Matrix;
pub use pa::{PaConfig, PaTrace};
pub use projection::ProjectionConfig;
pub use scalar::Scalar;
pub use spline::{FitProblem, SplineMap};
pub use templates::{TemplateKind, TemplatePoint};

pub type MatrixF64 = Matrix<f64>;
pub type PointCloudF64 = PointCloud<f64>;
pub type TemplatePointF64 = TemplatePoint<f64>;
pub type SplineMapF64 = SplineMap<f64>;
pub type PaConfigF64 = PaConfig<f64>;
pub type PaTraceF64 = PaTrace<f64>;
pub type LambdaProfileF64 = LambdaProfile<f64>;

pub type SplineMapF32 = SplineMap<f32>;
pub type PointCloudF32 = PointCloud<f32>;
