use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{align_inputs, RunOptions};
use crate::emb::{DatasetManifest, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::metrics::{cka_linear, AlignmentResult, Direction, Metric, PreparedSource};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGridCell {
    pub direction: Direction,
    pub x_layer: u32,
    pub y_layer: u32,
    pub result: AlignmentResult,
}

/// Alignment for every (x layer, y layer, direction), all on one item set
/// and one fold plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrid {
    /// Model pair name; empty when run outside an experiment spec.
    #[serde(default)]
    pub pair: String,
    pub x_model: String,
    pub y_model: String,
    pub x_layers: Vec<u32>,
    pub y_layers: Vec<u32>,
    pub n_items: usize,
    /// Ordered by direction, then x layer, then y layer.
    pub cells: Vec<LayerGridCell>,
}

impl LayerGrid {
    pub fn score(&self, direction: Direction, x_layer: u32, y_layer: u32) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.direction == direction && c.x_layer == x_layer && c.y_layer == y_layer)
            .map(|c| c.result.score)
    }
}

pub fn run_layer_grid_on(
    x_layers: &[EmbeddingMatrix],
    y_layers: &[EmbeddingMatrix],
    manifest: Option<&DatasetManifest>,
    opts: &RunOptions,
) -> Result<LayerGrid> {
    opts.validate()?;
    if x_layers.is_empty() || y_layers.is_empty() {
        return Err(Error::Config("layer grid needs at least one layer on each side".into()));
    }
    let all: Vec<EmbeddingMatrix> = x_layers.iter().chain(y_layers).cloned().collect();
    let aligned = align_inputs(&all, manifest, opts.pairing)?;
    let plan = opts.fold_plan(&aligned.pair_keys)?;
    let (xs, ys) = aligned.matrices.split_at(x_layers.len());

    let mut cells = Vec::new();
    for &direction in &opts.directions {
        let (sources, targets) = match direction {
            Direction::XToY => (xs, ys),
            Direction::YToX => (ys, xs),
        };
        // rows: sources, columns: targets
        let block: Vec<Vec<AlignmentResult>> = sources
            .par_iter()
            .map(|src| -> Result<Vec<AlignmentResult>> {
                match opts.metric {
                    Metric::LinearPredictivity => {
                        let prepared = PreparedSource::new(src.data.as_ref(), &plan, opts.seed)?;
                        targets
                            .par_iter()
                            .map(|tgt| {
                                prepared
                                    .score(tgt.data.as_ref(), &opts.lambda_grid)
                                    .map(|r| r.with_direction(direction))
                            })
                            .collect()
                    }
                    Metric::Cka => targets
                        .par_iter()
                        .map(|tgt| {
                            Ok(AlignmentResult {
                                direction,
                                metric: Metric::Cka,
                                score: cka_linear(src.data.as_ref(), tgt.data.as_ref())?,
                                per_fold_scores: Vec::new(),
                                per_fold_lambda: Vec::new(),
                                n_items: src.rows(),
                                d_source: src.cols(),
                                d_target: tgt.cols(),
                            })
                        })
                        .collect(),
                }
            })
            .collect::<Result<_>>()?;
        for (xi, xm) in xs.iter().enumerate() {
            for (yi, ym) in ys.iter().enumerate() {
                let result = match direction {
                    Direction::XToY => block[xi][yi].clone(),
                    Direction::YToX => block[yi][xi].clone(),
                };
                cells.push(LayerGridCell {
                    direction,
                    x_layer: xm.layer_index,
                    y_layer: ym.layer_index,
                    result,
                });
            }
        }
    }
    Ok(LayerGrid {
        pair: String::new(),
        x_model: xs[0].model_id.clone(),
        y_model: ys[0].model_id.clone(),
        x_layers: xs.iter().map(|m| m.layer_index).collect(),
        y_layers: ys.iter().map(|m| m.layer_index).collect(),
        n_items: aligned.rows(),
        cells,
    })
}
