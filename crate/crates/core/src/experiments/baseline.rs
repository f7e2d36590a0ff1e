use std::collections::HashSet;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregation::{curve_scores, exemplar_rows, AggregateSide, DeficientPolicy};
use super::{align_inputs, score_pair, PairInput, RunOptions};
use crate::emb::DatasetManifest;
use crate::error::{Error, Result};
use crate::metrics::{derive_seed, Direction, Metric};
use crate::stats::mean;

/// Which experiment is recomputed on shuffled correspondences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineTarget {
    #[default]
    Align,
    AggregationCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub pair: String,
    pub direction: Direction,
    /// Exemplar count, for aggregation-curve baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub matched: f64,
    /// Mean over shuffles.
    pub shuffled: f64,
    pub shuffled_runs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub target: BaselineTarget,
    pub metric: Metric,
    pub shuffles: usize,
    /// Ordered by pair, direction, then k.
    pub entries: Vec<BaselineEntry>,
}

/// Seeded permutation without fixed points (Sattolo's algorithm, which
/// draws a uniformly random single cycle).
pub fn derangement(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "shuffling correspondences needs at least 2 items, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        perm.swap(i, j);
    }
    Ok(perm)
}

fn shuffle_seed(seed: u64, shuffle: usize) -> u64 {
    derive_seed(seed ^ 0x5348_5546_464c_4500, shuffle as u64)
}

/// Matched versus shuffled-correspondence alignment.
pub fn run_shuffled_baseline_on(
    pairs: &[PairInput],
    manifest: Option<&DatasetManifest>,
    target: BaselineTarget,
    shuffles: usize,
    aggregation: (AggregateSide, usize, DeficientPolicy),
    opts: &RunOptions,
) -> Result<BaselineReport> {
    opts.validate()?;
    if shuffles == 0 {
        return Err(Error::Config("shuffle count must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Config("baseline needs at least one model pair".into()));
    }
    // per pair: [condition][direction or (k, direction)] scores; condition 0 is matched
    let per_pair: Vec<Vec<Vec<f64>>> = pairs
        .par_iter()
        .map(|pair| -> Result<Vec<Vec<f64>>> {
            (0..=shuffles)
                .into_par_iter()
                .map(|c| {
                    let perm_seed = (c > 0).then(|| shuffle_seed(opts.seed, c - 1));
                    match target {
                        BaselineTarget::Align => align_scores(pair, manifest, perm_seed, opts),
                        BaselineTarget::AggregationCurve => {
                            let m = manifest.ok_or_else(|| {
                                Error::Config("aggregation baselines need a manifest".into())
                            })?;
                            curve_scores_shuffled(pair, m, perm_seed, aggregation, opts)
                        }
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    for (pair, scores) in pairs.iter().zip(&per_pair) {
        let ks: Vec<Option<usize>> = match target {
            BaselineTarget::Align => vec![None],
            BaselineTarget::AggregationCurve => (1..=aggregation.1).map(Some).collect(),
        };
        for (di, &direction) in opts.directions.iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                let at = ki * opts.directions.len() + di;
                let runs: Vec<f64> = scores[1..].iter().map(|s| s[at]).collect();
                entries.push(BaselineEntry {
                    pair: pair.name.clone(),
                    direction,
                    k,
                    matched: scores[0][at],
                    shuffled: mean(&runs),
                    shuffled_runs: runs,
                });
            }
        }
    }
    Ok(BaselineReport {
        target,
        metric: opts.metric,
        shuffles,
        entries,
    })
}

fn shuffled_manifest(pair: &PairInput, manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    let perm = derangement(manifest.pair_keys().len(), seed)?;
    let y_ids: HashSet<&str> = pair.y.item_ids.iter().map(String::as_str).collect();
    manifest.remap_pair_keys(&y_ids, &perm)
}

fn align_scores(
    pair: &PairInput,
    manifest: Option<&DatasetManifest>,
    perm_seed: Option<u64>,
    opts: &RunOptions,
) -> Result<Vec<f64>> {
    let inputs = [pair.x.clone(), pair.y.clone()];
    let (x, y, keys) = match (manifest, perm_seed) {
        (Some(m), Some(seed)) => {
            let shuffled = shuffled_manifest(pair, m, seed)?;
            let a = align_inputs(&inputs, Some(&shuffled), opts.pairing)?;
            let [x, y]: [_; 2] = a.matrices.try_into().unwrap();
            (x.data, y.data, a.pair_keys)
        }
        (m, seed) => {
            let a = align_inputs(&inputs, m, opts.pairing)?;
            let [x, y]: [_; 2] = a.matrices.try_into().unwrap();
            let y = match seed {
                Some(seed) => {
                    let perm = derangement(y.rows(), seed)?;
                    Mat::from_fn(y.rows(), y.cols(), |i, j| y.data[(perm[i], j)])
                }
                None => y.data,
            };
            (x.data, y, a.pair_keys)
        }
    };
    let plan = opts.fold_plan(&keys)?;
    opts.directions
        .iter()
        .map(|&d| score_pair(x.as_ref(), y.as_ref(), &plan, d, opts).map(|r| r.score))
        .collect()
}

/// Flattened `[k][direction]` curve scores.
fn curve_scores_shuffled(
    pair: &PairInput,
    manifest: &DatasetManifest,
    perm_seed: Option<u64>,
    (side, k_max, policy): (AggregateSide, usize, DeficientPolicy),
    opts: &RunOptions,
) -> Result<Vec<f64>> {
    let shuffled;
    let manifest = match perm_seed {
        Some(seed) => {
            shuffled = shuffled_manifest(pair, manifest, seed)?;
            &shuffled
        }
        None => manifest,
    };
    let (agg, fix) = match side {
        AggregateSide::X => (&pair.x, &pair.y),
        AggregateSide::Y => (&pair.y, &pair.x),
    };
    let layout = exemplar_rows(agg, fix, manifest, k_max, policy)?;
    let mut out = Vec::new();
    for k in 1..=k_max {
        out.extend(curve_scores(pair, &layout, side, k, opts)?);
    }
    Ok(out)
}
