use std::collections::{HashMap, HashSet};

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score_pair, PairInput, RunOptions};
use crate::emb::{DatasetManifest, EmbeddingMatrix, ManifestItem};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_mean, Direction};
use crate::stats::{mean, stderr};

/// Which side of each pair gets averaged over exemplars.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateSide {
    X,
    #[default]
    Y,
}

/// What to do with pair keys that have fewer than `k_max` exemplars.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeficientPolicy {
    #[default]
    Error,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Number of exemplars averaged.
    pub k: usize,
    pub direction: Direction,
    pub score_mean: f64,
    /// Standard error across model pairs; absent with a single pair.
    pub score_stderr: Option<f64>,
    /// Per model pair, in input order.
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationCurve {
    pub side: AggregateSide,
    pub k_max: usize,
    pub pairs: Vec<String>,
    pub n_items: Vec<usize>,
    pub dropped_keys: Vec<String>,
    /// Ordered by direction, then k.
    pub points: Vec<CurvePoint>,
}

/// Rows of one pair arranged for aggregation: the fixed side has one row per
/// pair key, the aggregated side `k_max` exemplar rows per key.
pub(crate) struct ExemplarRows {
    pub keys: Vec<String>,
    pub fixed: Vec<usize>,
    pub exemplars: Vec<Vec<usize>>,
    pub dropped: Vec<String>,
}

pub(crate) fn exemplar_rows(
    aggregated: &EmbeddingMatrix,
    fixed: &EmbeddingMatrix,
    manifest: &DatasetManifest,
    k_max: usize,
    policy: DeficientPolicy,
) -> Result<ExemplarRows> {
    let agg_idx = aggregated.row_index();
    let fix_idx = fixed.row_index();
    let missing: Vec<String> = manifest
        .items
        .iter()
        .filter(|it| {
            !agg_idx.contains_key(it.item_id.as_str()) && !fix_idx.contains_key(it.item_id.as_str())
        })
        .map(|it| it.item_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingItems(missing));
    }

    let mut per_key: HashMap<&str, (Vec<(usize, &ManifestItem)>, Vec<(usize, &ManifestItem)>)> =
        HashMap::new();
    for (pos, it) in manifest.items.iter().enumerate() {
        let entry = per_key.entry(it.pair_key.as_str()).or_default();
        if agg_idx.contains_key(it.item_id.as_str()) {
            entry.0.push((pos, it));
        } else {
            entry.1.push((pos, it));
        }
    }

    let mut out = ExemplarRows {
        keys: Vec::new(),
        fixed: Vec::new(),
        exemplars: Vec::new(),
        dropped: Vec::new(),
    };
    let mut deficient = Vec::new();
    for key in manifest.pair_keys() {
        let (agg, fix) = per_key.get_mut(key).unwrap();
        if fix.is_empty() {
            return Err(Error::Manifest(format!(
                "pair key {key:?} has no {} item",
                fixed.modality
            )));
        }
        if agg.len() < k_max {
            deficient.push(key.to_string());
            continue;
        }
        for side in [&mut *agg, &mut *fix] {
            side.sort_by_key(|(pos, it)| (it.exemplar_index.is_none(), it.exemplar_index, *pos));
        }
        out.keys.push(key.to_string());
        out.fixed.push(fix_idx[fix[0].1.item_id.as_str()]);
        out.exemplars.push(
            agg[..k_max]
                .iter()
                .map(|(_, it)| agg_idx[it.item_id.as_str()])
                .collect(),
        );
    }
    if !deficient.is_empty() {
        match policy {
            DeficientPolicy::Error => {
                return Err(Error::DeficientExemplars {
                    required: k_max,
                    keys: deficient,
                })
            }
            DeficientPolicy::Drop => out.dropped = deficient,
        }
    }
    if out.keys.is_empty() {
        return Err(Error::Manifest("no pair key has enough exemplars".into()));
    }
    Ok(out)
}

/// Mean of the first `k` exemplar rows of every key.
pub(crate) fn averaged(m: &EmbeddingMatrix, exemplars: &[Vec<usize>], k: usize) -> Result<Mat<f64>> {
    let rows: Vec<Vec<f64>> = exemplars
        .iter()
        .map(|ex| {
            let vecs: Vec<Vec<f64>> = ex[..k]
                .iter()
                .map(|&r| m.data.row(r).iter().copied().collect())
                .collect();
            aggregate_mean(&vecs)
        })
        .collect::<Result<_>>()?;
    Ok(Mat::from_fn(rows.len(), m.cols(), |i, j| rows[i][j]))
}

pub(crate) fn gather(m: &EmbeddingMatrix, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), m.cols(), |i, j| m.data[(rows[i], j)])
}

/// Alignment as a function of how many exemplars are averaged per item.
pub fn run_aggregation_curve_on(
    pairs: &[PairInput],
    manifest: &DatasetManifest,
    side: AggregateSide,
    k_max: usize,
    policy: DeficientPolicy,
    opts: &RunOptions,
) -> Result<AggregationCurve> {
    opts.validate()?;
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Config("aggregation needs at least one model pair".into()));
    }
    let layouts: Vec<ExemplarRows> = pairs
        .iter()
        .map(|p| {
            let (agg, fix) = match side {
                AggregateSide::X => (&p.x, &p.y),
                AggregateSide::Y => (&p.y, &p.x),
            };
            exemplar_rows(agg, fix, manifest, k_max, policy)
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (1..=k_max).map(move |k| (p, k)))
        .collect();
    let scores: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(p, k)| curve_scores(&pairs[p], &layouts[p], side, k, opts))
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    for (di, &direction) in opts.directions.iter().enumerate() {
        for k in 1..=k_max {
            let per_pair: Vec<f64> = (0..pairs.len())
                .map(|p| scores[p * k_max + (k - 1)][di])
                .collect();
            points.push(CurvePoint {
                k,
                direction,
                score_mean: mean(&per_pair),
                score_stderr: stderr(&per_pair).ok(),
                scores: per_pair,
            });
        }
    }
    let dropped: HashSet<&String> = layouts.iter().flat_map(|l| &l.dropped).collect();
    let mut dropped_keys: Vec<String> = dropped.into_iter().cloned().collect();
    dropped_keys.sort();
    Ok(AggregationCurve {
        side,
        k_max,
        pairs: pairs.iter().map(|p| p.name.clone()).collect(),
        n_items: layouts.iter().map(|l| l.keys.len()).collect(),
        dropped_keys,
        points,
    })
}

/// Scores for every configured direction at one k.
pub(crate) fn curve_scores(
    pair: &PairInput,
    layout: &ExemplarRows,
    side: AggregateSide,
    k: usize,
    opts: &RunOptions,
) -> Result<Vec<f64>> {
    let (agg, fix) = match side {
        AggregateSide::X => (&pair.x, &pair.y),
        AggregateSide::Y => (&pair.y, &pair.x),
    };
    let agg_rows = averaged(agg, &layout.exemplars, k)?;
    let fix_rows = gather(fix, &layout.fixed);
    let (x, y) = match side {
        AggregateSide::X => (agg_rows, fix_rows),
        AggregateSide::Y => (fix_rows, agg_rows),
    };
    let plan = opts.fold_plan(&layout.keys)?;
    opts.directions
        .iter()
        .map(|&d| score_pair(x.as_ref(), y.as_ref(), &plan, d, opts).map(|r| r.score))
        .collect()
}
