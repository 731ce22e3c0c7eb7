//! Exact-greedy, second-order gradient-boosted regression trees.
//!
//! The booster fits depth-first trees to the gradient and hessian of either
//! a Poisson log-link loss or a squared loss, evaluates a validation set after
//! every round and keeps the round with the lowest validation loss. Missing
//! feature values are encoded as `NaN` and routed through a learned default
//! direction at every split.
//!
//! A bagged random-forest mode reuses the same tree grower with bootstrap
//! resampling and per-split feature subsampling.

mod booster;
mod error;
mod forest;
mod loss;
mod matrix;
mod tree;

pub use booster::{train, BoostParams, BoostedModel, TrainingHistory, MODEL_FORMAT_VERSION};
pub use error::{GbtError, Result};
pub use forest::{train_forest, ForestModel, ForestParams};
pub use loss::{grad_hess, LossKind};
pub use matrix::Matrix;
pub use tree::{
    best_split, leaf_weight, Node, SplitCandidate, Tree, TreeParams, GAIN_TIE_TOLERANCE,
};
