//! Alignment metrics and the numerics underneath them.

mod cka;
mod folds;
mod pearson;
mod predictivity;
mod ridge;
mod vector;
mod zscore;

pub use cka::{cka_linear, cka_linear_with, CkaRoute};
pub use folds::{make_folds, FoldPlan};
pub use pearson::pearson_mean;
pub use predictivity::{
    default_lambda_grid, derive_seed, inner_fold_seed, linear_predictivity, AlignmentResult, Direction, Metric,
    PreparedSource, MIN_ROWS_PER_FOLD,
};
pub use ridge::{ridge_solve, RidgeFit, RidgePath};
pub use vector::{aggregate_mean, cosine_score};
pub use zscore::{Standardizer, STD_FLOOR};
