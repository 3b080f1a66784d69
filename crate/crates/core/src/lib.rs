//! Predictive k-means: supervised redescription, class-seeded clustering
//! and per-cluster predictors.
//!
//! Training maps every instance to the `d × J` vector of per-feature class
//! log-likelihoods, seeds one center per class and runs Lloyd iteration in
//! that space. Each cluster then predicts with a smoothed majority vote or,
//! where it pays off, a local selective naive Bayes.

pub mod clustering;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod local_models;
pub mod par;
pub mod profile;

pub use dataset::{stratified_kfold, Dataset, FeatureKind, FoldPlan, Schema, SchemaDecl, Value};
pub use error::{Error, Result};
pub use evaluation::{compare, cross_validate, AlgorithmSpec, EvaluationReport};
pub use local_models::{PkmConfig, PkmModel, Prediction, Variant};
pub use par::Execution;
