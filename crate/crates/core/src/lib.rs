//! Clustering-labelled logistic regression for lifelog tables.
//!
//! The pipeline cleans a CSV, derives binary labels with k-means (elbow
//! rule for k), projects the features with PCA, tunes a logistic regression
//! by grid-searched cross-validation and evaluates it in batch or as a
//! replayed micro-batch stream, next to four baseline classifiers.

pub mod classifiers;
pub mod cluster;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod modelselect;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod stream;

pub use classifiers::{Classifier, ClassifierKind, ClassifierModel};
pub use cluster::{ClusterModel, ElbowCurve, KMeansOptions};
pub use error::{Error, ErrorClass, Result};
pub use ingest::{ColumnKind, Recipe, Table, Value};
pub use linalg::Matrix;
pub use metrics::{Confusion, EvalReport};
pub use modelselect::{CvResult, ParamGrid};
pub use pca::{PcaModel, Selection};
pub use pipeline::{ModelBundle, PipelineConfig};
pub use preprocess::{FeatureMatrix, LabelVector, Scaler, ScalerKind};
