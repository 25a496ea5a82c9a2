//! Interval prediction of annual average daily traffic (AADT).
//!
//! The crate covers the whole modelling chain: cleaning feature tables,
//! zone accessibility features, grouped PCA, quantile random forests,
//! hyperparameter search, interval metrics, feature importance and the
//! congestion / collision-risk calculations that consume the intervals.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! aliases below fix the scalar to `f64`, which is what the CLI uses.

pub mod accessibility;
pub mod apps;
pub mod dataset;
pub mod error;
pub mod importance;
pub mod matrix;
pub mod metrics;
pub mod pca;
pub mod scalar;
pub mod seed;
pub mod tuning;

pub mod forest;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type FeatureTable64 = dataset::FeatureTable<f64>;
pub type FeatureTable32 = dataset::FeatureTable<f32>;
pub type Matrix64 = Matrix<f64>;
pub type QuantileForest64 = forest::QuantileForest<f64>;
pub type QuantileForest32 = forest::QuantileForest<f32>;
pub type PredictionInterval64 = forest::PredictionInterval<f64>;
pub type PcaGroupModel64 = pca::PcaGroupModel<f64>;
pub type PointMetrics64 = metrics::PointMetrics<f64>;
pub type IntervalMetrics64 = metrics::IntervalMetrics<f64>;
pub type ImportanceReport64 = importance::ImportanceReport<f64>;
pub type Zone64 = accessibility::Zone<f64>;
