//! Lifecycle analytics for hashtags that appear after an exogenous event: detection,
//! per-minute vibrancy features, curve summaries, winner/also-ran classes, and growth
//! and persistence models.

pub mod coefficient;
pub mod dataset;
pub mod episode;
pub mod error;
pub mod event;
pub mod growth;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod survival;
pub mod synth;
pub mod taxonomy;
pub mod trajectory;
pub mod vibrancy;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CumulativeCurve64 = trajectory::CumulativeCurve<f64>;
pub type SplineFit64 = trajectory::SplineFit<f64>;
pub type CurveFit64 = trajectory::CurveFit<f64>;
pub type CurveSummary64 = trajectory::CurveSummary<f64>;
pub type CurveAnalysis64 = trajectory::CurveAnalysis<f64>;
pub type FeatureVector64 = taxonomy::FeatureVector<f64>;
pub type ClusterModel64 = taxonomy::ClusterModel<f64>;
pub type ClassAssignment64 = taxonomy::ClassAssignment<f64>;
