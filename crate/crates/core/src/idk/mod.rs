//! The IDK relevance head: logistic regression over frozen NSP pair features,
//! trained against a fixed negative response with an L1 penalty.
//!
//! Ablation variants swap the regularizer, the negative scheme (fixed text vs.
//! shuffled human responses) and the loss (sigmoid BCE, two-logit softmax,
//! modified triplet).

mod config;
pub mod loss;
mod model;
mod optim;
mod pairs;
mod train;

pub use config::{
    parse_negatives, AdamParams, Loss, Negatives, Regularizer, TrainConfig, DEFAULT_NEGATIVE,
};
pub use model::{rescale, score, sigmoid, weight_histogram, RelevanceModel, WeightHistogram};
pub use optim::Adam;
pub use pairs::{build_pairs, PairSet, TrainingPair};
pub use train::{train, train_traced, TrainTrace};

pub const IDK_METRIC: &str = "IDK";
