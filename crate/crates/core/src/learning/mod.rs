//! Classifiers and score fusion.

pub mod fusion;
pub mod svm;

pub use fusion::{
    fuse, greedy_weight_search, normalize_scores, renormalize, simplex_grid, FusionWeights,
    MinMax, WeightSearch,
};
pub use svm::{read_model, svm_train, write_model, LinearSvmModel, Samples, SvmParams, TrainMeta};
