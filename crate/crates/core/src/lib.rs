//! Calibration-bias mitigation without fixed subgroups.
//!
//! Training runs in two stages. A plain cross-entropy model first scores how
//! badly calibrated each training sample is (`|confidence - correct|`), and
//! those gaps are clustered with 1-D k-means. The final model is then trained
//! with a focal loss averaged per cluster, which up-weights the small cluster
//! of confidently wrong samples. Evaluation slices a test set by any number of
//! attributes and reports the worst subgroup's F1 and quantile-binned ECE.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.

// `!(x >= 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type MlpModel = model::MlpModel<f64>;
pub type PredictionRecord = metrics::PredictionRecord<f64>;
pub type ClusterAssignment = clustering::ClusterAssignment<f64>;
pub type EvalReport = metrics::EvalReport<f64>;
pub type TrainConfig = pipeline::TrainConfig<f64>;
pub type TrainedArtifacts = pipeline::TrainedArtifacts<f64>;
pub type TradeoffTable = pipeline::TradeoffTable<f64>;

pub type Dataset32 = data::Dataset<f32>;
pub type MlpModel32 = model::MlpModel<f32>;
pub type PredictionRecord32 = metrics::PredictionRecord<f32>;
pub type TrainConfig32 = pipeline::TrainConfig<f32>;
