//! Supervised log-likelihood redescription and the unsupervised baseline
//! encodings.

pub mod baseline;
mod codebook;
pub mod modl;

pub use baseline::{bgb_encode, rank_normalize, BaselineEncoder, BasicGrouping, RankNormalizer};
pub use codebook::{
    discretize_numeric, group_categorical, Cells, Codebook, FeatureCodebook, IntervalPartition,
    Partition, ValueGrouping, SMOOTHING,
};
