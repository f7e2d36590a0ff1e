//! Experiment recipes: layer-wise grids, group and variant contrasts,
//! aggregation curves and shuffled-correspondence baselines.
//!
//! Each recipe has an in-memory entry point (`*_on`) taking loaded matrices
//! and a file-driven one reached through [`run`] with an [`ExperimentSpec`].
//! Independent cells, model pairs and curve points run in parallel; results
//! are always assembled in a fixed order.

mod aggregation;
mod baseline;
mod contrast;
mod layer_grid;
mod output;
mod spec;

pub use aggregation::{run_aggregation_curve_on, AggregateSide, AggregationCurve, CurvePoint, DeficientPolicy};
pub use baseline::{derangement, run_shuffled_baseline_on, BaselineEntry, BaselineReport, BaselineTarget};
pub use contrast::{run_group_contrast_on, ContrastEntry, ContrastMode, ContrastReport};
pub use layer_grid::{run_layer_grid_on, LayerGrid, LayerGridCell};
pub use output::{
    csv_max_abs_diff, file_digest, replay, run, run_align_on, write_run, AlignReport, AlignRow,
    ExperimentOutput, RunRecord, CSV_SCHEMA_VERSION,
};
pub use spec::{
    AggregationParams, BaselineParams, ContrastParams, ExperimentKind, ExperimentSpec, ModelPair,
    VariantFiles,
};

use std::collections::BTreeMap;

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::emb::{align_by_ids, align_rows, AlignedSet, DatasetManifest, EmbeddingMatrix, PairingPolicy};
use crate::error::{Error, Result};
use crate::metrics::{
    cka_linear, default_lambda_grid, linear_predictivity, make_folds, AlignmentResult, Direction,
    FoldPlan, Metric,
};

/// Settings shared by every recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub metric: Metric,
    pub directions: Vec<Direction>,
    pub seed: u64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub pairing: PairingPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            metric: Metric::LinearPredictivity,
            directions: vec![Direction::XToY, Direction::YToX],
            seed: 0,
            folds: 5,
            lambda_grid: default_lambda_grid(),
            pairing: PairingPolicy::OneToOne,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if self.directions.is_empty() {
            return Err(Error::Config("at least one direction is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda grid is empty".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!("lambda {l} must be positive")));
        }
        Ok(())
    }

    /// Shared fold plan over rows keyed by `pair_keys`.
    pub fn fold_plan(&self, pair_keys: &[String]) -> Result<FoldPlan> {
        make_folds(pair_keys.len(), self.folds, self.seed, Some(pair_keys))
    }
}

/// One loaded vision–language model pair, with optional variant replacements.
#[derive(Clone, Debug)]
pub struct PairInput {
    pub name: String,
    pub x: EmbeddingMatrix,
    pub y: EmbeddingMatrix,
    pub variants: BTreeMap<String, VariantInput>,
}

impl PairInput {
    pub fn new(name: impl Into<String>, x: EmbeddingMatrix, y: EmbeddingMatrix) -> Self {
        PairInput {
            name: name.into(),
            x,
            y,
            variants: BTreeMap::new(),
        }
    }
}

/// Replacement files for one input variant; at most one side is expected to
/// change per contrast.
#[derive(Clone, Debug, Default)]
pub struct VariantInput {
    pub x: Option<EmbeddingMatrix>,
    pub y: Option<EmbeddingMatrix>,
}

/// Aligns matrices through the manifest when one is given, by item id
/// otherwise.
pub fn align_inputs(
    matrices: &[EmbeddingMatrix],
    manifest: Option<&DatasetManifest>,
    pairing: PairingPolicy,
) -> Result<AlignedSet> {
    match manifest {
        Some(m) => align_rows(matrices, m, pairing),
        None => align_by_ids(matrices),
    }
}

/// Scores one direction of an aligned pair under a shared fold plan.
pub fn score_pair(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    plan: &FoldPlan,
    direction: Direction,
    opts: &RunOptions,
) -> Result<AlignmentResult> {
    let (source, target) = match direction {
        Direction::XToY => (x, y),
        Direction::YToX => (y, x),
    };
    match opts.metric {
        Metric::LinearPredictivity => {
            linear_predictivity(source, target, plan, &opts.lambda_grid, opts.seed)
                .map(|r| r.with_direction(direction))
        }
        Metric::Cka => Ok(AlignmentResult {
            direction,
            metric: Metric::Cka,
            score: cka_linear(source, target)?,
            per_fold_scores: Vec::new(),
            per_fold_lambda: Vec::new(),
            n_items: x.nrows(),
            d_source: source.ncols(),
            d_target: target.ncols(),
        }),
    }
}
