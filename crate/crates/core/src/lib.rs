//! Similarity-based classification for imbalanced binary problems.
//!
//! A weighted exponential similarity scores each point by the labels of its
//! neighbours. The weights are fitted jointly with a few synthetic minority
//! points ("absent" points) by solving the stationarity conditions of a
//! penalized likelihood. Majority data is reduced by cluster-based
//! undersampling and several such models are averaged.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod exec;
pub mod lambda_search;
mod lm;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod similarity;

pub use data::{generate_toy, load_csv, normalize, stratified_folds, LabeledDataset, Toy};
pub use ensemble::{ensemble_predict, kmeans, train_ensemble, LambdaMode, PipelineConfig, SbicEnsemble};
pub use error::{Error, Result};
pub use eval::{auc, cross_validate, friedman_statistic, rank_matrix, roc_curve, CvReport, RocCurve, ScoredTestSet};
pub use lambda_search::{compute_thresholds, grid_select, LambdaGrid};
pub use model::{predict_proba, solve_stationary, FittedModel, PenaltyConfig, SolverConfig};
pub use pipeline::Classifier;
pub use similarity::{LinkFunction, LinkKind, Point, SimilarityWeights};
