//! Cross-validated ridge linear predictivity.
//!
//! For each outer fold, λ is chosen by an inner k-fold cross-validation on
//! the outer training rows (mean held-out Pearson r, ties to the smallest λ),
//! the map is refit on the full training split, and the held-out rows are
//! scored. Both sides are z-scored with the statistics of whichever rows the
//! map is fitted on. The score is the mean of the per-fold scores, each of
//! which is the mean Pearson r over target columns.

use std::fmt;

use faer::MatRef;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::pearson::mean_column_r;
use super::ridge::{PathEvaluator, RidgePath};
use super::zscore::Standardizer;
use crate::error::{Error, Result};
use crate::linalg::{first_non_finite, select_rows};

/// Every fold, inner or outer, needs at least this many held-out rows.
pub const MIN_ROWS_PER_FOLD: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// X predicts Y.
    #[serde(rename = "xy")]
    XToY,
    /// Y predicts X.
    #[serde(rename = "yx")]
    YToX,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "xy" | "x->y" | "XToY" => Some(Direction::XToY),
            "yx" | "y->x" | "YToX" => Some(Direction::YToX),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XToY => "xy",
            Direction::YToX => "yx",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    #[serde(alias = "linpred")]
    LinearPredictivity,
    Cka,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linpred" | "linear_predictivity" => Some(Metric::LinearPredictivity),
            "cka" => Some(Metric::Cka),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::LinearPredictivity => "linear_predictivity",
            Metric::Cka => "cka",
        })
    }
}

/// One directional alignment score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub direction: Direction,
    pub metric: Metric,
    pub score: f64,
    /// Empty for CKA.
    pub per_fold_scores: Vec<f64>,
    /// Selected λ per outer fold; empty for CKA.
    pub per_fold_lambda: Vec<f64>,
    pub n_items: usize,
    pub d_source: usize,
    pub d_target: usize,
}

impl AlignmentResult {
    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }
}

/// `{1e-8, 1e-7, …, 1e8}`
pub fn default_lambda_grid() -> Vec<f64> {
    (-8..=8)
        .map(|e| format!("1e{e}").parse().expect("valid literal"))
        .collect()
}

/// Seed of the inner split inside one outer fold.
pub fn inner_fold_seed(seed: u64, outer_fold: usize) -> u64 {
    derive_seed(seed, outer_fold as u64)
}

/// Independent child seed for a numbered stream (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fit on `fit_rows`, evaluate on `eval_rows`.
#[derive(Clone, Debug)]
struct Split {
    fit_rows: Vec<usize>,
    eval_rows: Vec<usize>,
    path: PathEvaluator,
}

impl Split {
    fn new(x: MatRef<'_, f64>, fit_rows: Vec<usize>, eval_rows: Vec<usize>) -> Result<Self> {
        let (scaler, x_fit) = Standardizer::fit_apply(select_rows(x, &fit_rows).as_ref())?;
        let x_eval = scaler.apply(select_rows(x, &eval_rows).as_ref());
        let path = RidgePath::new(x_fit.as_ref())?.into_evaluator(x_eval.as_ref());
        Ok(Split {
            fit_rows,
            eval_rows,
            path,
        })
    }

    /// Held-out mean Pearson r for each λ in `grid`.
    fn scores(&self, y: MatRef<'_, f64>, grid: &[f64]) -> Result<Vec<f64>> {
        let (scaler, y_fit) = Standardizer::fit_apply(select_rows(y, &self.fit_rows).as_ref())?;
        let y_eval = scaler.apply(select_rows(y, &self.eval_rows).as_ref());
        let coef = self.path.coefficients(y_fit.as_ref());
        Ok(grid
            .iter()
            .map(|&lambda| {
                let pred = self.path.predict(coef.as_ref(), lambda);
                mean_column_r(pred.as_ref(), y_eval.as_ref())
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
struct PreparedFold {
    outer: Split,
    inner: Vec<Split>,
}

/// A source representation factorized for every outer and inner split of a
/// fold plan, ready to be scored against any number of targets.
#[derive(Clone, Debug)]
pub struct PreparedSource {
    n_items: usize,
    d_source: usize,
    folds: Vec<PreparedFold>,
}

impl PreparedSource {
    pub fn new(x: MatRef<'_, f64>, plan: &FoldPlan, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if plan.n_items != n {
            return Err(Error::InvalidArgument(format!(
                "fold plan covers {} items, matrix has {n} rows",
                plan.n_items
            )));
        }
        let k = plan.n_folds;
        if n < MIN_ROWS_PER_FOLD * k {
            return Err(Error::InvalidArgument(format!(
                "{n} rows are too few for nested {k}-fold cross-validation \
                 (need at least {}); use a smaller fold count",
                MIN_ROWS_PER_FOLD * k
            )));
        }
        if let Some((row, col)) = first_non_finite(x) {
            return Err(Error::NonFinite { row, col });
        }
        let folds = (0..k)
            .into_par_iter()
            .map(|fold| {
                let (train, test) = plan.split(fold);
                let inner_plan = plan.nested(&train, k, inner_fold_seed(seed, fold))?;
                let inner = (0..k)
                    .into_par_iter()
                    .map(|f| {
                        let (fit, eval) = inner_plan.split(f);
                        let fit = fit.into_iter().map(|i| train[i]).collect();
                        let eval = eval.into_iter().map(|i| train[i]).collect();
                        Split::new(x, fit, eval)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let outer = Split::new(x, train, test)?;
                Ok(PreparedFold { outer, inner })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSource {
            n_items: n,
            d_source: x.ncols(),
            folds,
        })
    }

    /// Linear predictivity of `y` from the prepared source.
    pub fn score(&self, y: MatRef<'_, f64>, lambda_grid: &[f64]) -> Result<AlignmentResult> {
        if y.nrows() != self.n_items {
            return Err(Error::InvalidArgument(format!(
                "target has {} rows, source has {}",
                y.nrows(),
                self.n_items
            )));
        }
        if let Some((row, col)) = first_non_finite(y) {
            return Err(Error::NonFinite { row, col });
        }
        if lambda_grid.is_empty() {
            return Err(Error::InvalidArgument("empty lambda grid".into()));
        }
        if let Some(bad) = lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {bad}")));
        }
        // ascending λ so that strict improvement keeps the smallest on ties
        let mut ascending: Vec<f64> = lambda_grid.to_vec();
        ascending.sort_by(f64::total_cmp);
        ascending.dedup();

        let per_fold: Vec<(f64, f64)> = self
            .folds
            .par_iter()
            .map(|fold| {
                let inner: Vec<Vec<f64>> = fold
                    .inner
                    .par_iter()
                    .map(|split| split.scores(y, &ascending))
                    .collect::<Result<_>>()?;
                let mut best = (f64::NEG_INFINITY, ascending[0]);
                for (li, &lambda) in ascending.iter().enumerate() {
                    let mean = inner.iter().map(|s| s[li]).sum::<f64>() / inner.len() as f64;
                    if mean > best.0 {
                        best = (mean, lambda);
                    }
                }
                let lambda = best.1;
                let score = fold.outer.scores(y, &[lambda])?[0];
                Ok((score, lambda))
            })
            .collect::<Result<_>>()?;

        let per_fold_scores: Vec<f64> = per_fold.iter().map(|p| p.0).collect();
        let per_fold_lambda: Vec<f64> = per_fold.iter().map(|p| p.1).collect();
        let score = per_fold_scores.iter().sum::<f64>() / per_fold_scores.len() as f64;
        Ok(AlignmentResult {
            direction: Direction::XToY,
            metric: Metric::LinearPredictivity,
            score,
            per_fold_scores,
            per_fold_lambda,
            n_items: self.n_items,
            d_source: self.d_source,
            d_target: y.ncols(),
        })
    }
}

/// Cross-validated linear predictivity of `y` from `x` (the X→Y direction).
pub fn linear_predictivity(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    folds: &FoldPlan,
    lambda_grid: &[f64],
    seed: u64,
) -> Result<AlignmentResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::InvalidArgument(format!(
            "X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    PreparedSource::new(x, folds, seed)?.score(y, lambda_grid)
}
