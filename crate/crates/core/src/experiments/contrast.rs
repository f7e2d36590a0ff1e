use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{align_inputs, score_pair, PairInput, RunOptions};
use crate::emb::{DatasetManifest, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::metrics::{Direction, Metric};
use crate::stats::{bh_fdr_family, mean, paired_t, StatsResult};

/// What the two conditions of a contrast are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastMode {
    /// Two manifest group labels, e.g. preferred vs non_preferred.
    Groups { a: String, b: String },
    /// The original inputs against each named variant.
    Variants { names: Vec<String> },
}

/// One contrast in one direction, across model pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastEntry {
    pub name: String,
    pub direction: Direction,
    pub condition_a: String,
    pub condition_b: String,
    pub pairs: Vec<String>,
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    /// Rows per pair under each condition; they differ only when the
    /// conditions cover different pair keys.
    pub n_items_a: Vec<usize>,
    pub n_items_b: Vec<usize>,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Paired t-test of `scores_a − scores_b`, with its BH q-value.
    pub stats: Option<StatsResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub metric: Metric,
    /// BH family size per direction.
    pub family_size: usize,
    pub entries: Vec<ContrastEntry>,
}

struct Condition {
    x: EmbeddingMatrix,
    y: EmbeddingMatrix,
    manifest: Option<DatasetManifest>,
}

fn ids(m: &EmbeddingMatrix) -> HashSet<&str> {
    m.item_ids.iter().map(String::as_str).collect()
}

pub fn run_group_contrast_on(
    pairs: &[PairInput],
    manifest: Option<&DatasetManifest>,
    mode: &ContrastMode,
    min_rows: usize,
    family_size: Option<usize>,
    opts: &RunOptions,
) -> Result<ContrastReport> {
    opts.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("contrast needs at least one model pair".into()));
    }
    // (name, condition a, condition b) per pair
    let contrasts: Vec<(String, String, String)> = match mode {
        ContrastMode::Groups { a, b } => {
            if manifest.is_none() {
                return Err(Error::Config("group contrasts need a manifest".into()));
            }
            vec![(format!("{a}_vs_{b}"), a.clone(), b.clone())]
        }
        ContrastMode::Variants { names } => {
            if names.is_empty() {
                return Err(Error::Config("no variants to contrast".into()));
            }
            names
                .iter()
                .map(|v| (v.clone(), "original".to_string(), v.clone()))
                .collect()
        }
    };

    let condition = |pair: &PairInput, label: &str| -> Result<Condition> {
        match mode {
            ContrastMode::Groups { .. } => {
                let m = manifest.expect("checked above");
                let narrowed = m
                    .select_group(label, &ids(&pair.x))
                    .select_group(label, &ids(&pair.y));
                Ok(Condition {
                    x: pair.x.clone(),
                    y: pair.y.clone(),
                    manifest: Some(narrowed),
                })
            }
            ContrastMode::Variants { .. } if label == "original" => Ok(Condition {
                x: pair.x.clone(),
                y: pair.y.clone(),
                manifest: manifest.cloned(),
            }),
            ContrastMode::Variants { .. } => {
                let v = pair.variants.get(label).ok_or_else(|| {
                    Error::Config(format!("pair {} has no variant {label:?}", pair.name))
                })?;
                let x = v.x.clone().unwrap_or_else(|| pair.x.clone());
                let y = v.y.clone().unwrap_or_else(|| pair.y.clone());
                for (orig, repl) in [(&pair.x, &x), (&pair.y, &y)] {
                    if orig.modality != repl.modality {
                        return Err(Error::Config(format!(
                            "variant {label:?} of pair {} swaps {} for {}",
                            pair.name, orig.modality, repl.modality
                        )));
                    }
                    if ids(orig) != ids(repl) {
                        return Err(Error::MissingItems(vec![format!(
                            "variant {label:?} of pair {}: {} rows do not match the original items",
                            pair.name,
                            repl.label()
                        )]));
                    }
                }
                Ok(Condition {
                    x,
                    y,
                    manifest: manifest.cloned(),
                })
            }
        }
    };

    // every distinct (pair, condition) is scored once, in both directions
    let mut labels: Vec<String> = Vec::new();
    for (_, a, b) in &contrasts {
        for l in [a, b] {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..labels.len()).map(move |l| (p, l)))
        .collect();
    let scored: Vec<(Vec<f64>, usize)> = jobs
        .par_iter()
        .map(|&(p, l)| -> Result<(Vec<f64>, usize)> {
            let cond = condition(&pairs[p], &labels[l])?;
            let aligned = align_inputs(&[cond.x, cond.y], cond.manifest.as_ref(), opts.pairing)?;
            if aligned.rows() < min_rows {
                return Err(Error::Manifest(format!(
                    "condition {:?} of pair {} has {} rows, fewer than the minimum {min_rows}",
                    labels[l],
                    pairs[p].name,
                    aligned.rows()
                )));
            }
            let plan = opts.fold_plan(&aligned.pair_keys)?;
            let (x, y) = (&aligned.matrices[0].data, &aligned.matrices[1].data);
            let scores = opts
                .directions
                .iter()
                .map(|&d| score_pair(x.as_ref(), y.as_ref(), &plan, d, opts).map(|r| r.score))
                .collect::<Result<Vec<f64>>>()?;
            Ok((scores, aligned.rows()))
        })
        .collect::<Result<_>>()?;
    let lookup = |p: usize, label: &str| &scored[p * labels.len() + labels.iter().position(|l| l == label).unwrap()];

    let m = family_size.unwrap_or(contrasts.len());
    if m < contrasts.len() {
        return Err(Error::Config(format!(
            "family size {m} is smaller than the {} contrasts per direction",
            contrasts.len()
        )));
    }
    let mut entries = Vec::new();
    for (di, &direction) in opts.directions.iter().enumerate() {
        let first = entries.len();
        for (name, a, b) in &contrasts {
            let scores_a: Vec<f64> = (0..pairs.len()).map(|p| lookup(p, a).0[di]).collect();
            let scores_b: Vec<f64> = (0..pairs.len()).map(|p| lookup(p, b).0[di]).collect();
            let (stats, note) = if pairs.len() < 2 {
                (None, Some("paired t-test needs at least 2 model pairs".to_string()))
            } else {
                match paired_t(&scores_a, &scores_b) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            entries.push(ContrastEntry {
                name: name.clone(),
                direction,
                condition_a: a.clone(),
                condition_b: b.clone(),
                pairs: pairs.iter().map(|p| p.name.clone()).collect(),
                mean_a: mean(&scores_a),
                mean_b: mean(&scores_b),
                scores_a,
                scores_b,
                n_items_a: (0..pairs.len()).map(|p| lookup(p, a).1).collect(),
                n_items_b: (0..pairs.len()).map(|p| lookup(p, b).1).collect(),
                stats,
                note,
            });
        }
        assign_q_values(&mut entries[first..], m)?;
    }
    Ok(ContrastReport {
        metric: opts.metric,
        family_size: m,
        entries,
    })
}

/// BH over the entries of one direction that carry a test.
fn assign_q_values(family: &mut [ContrastEntry], m: usize) -> Result<()> {
    let p: Vec<f64> = family.iter().filter_map(|e| e.stats.as_ref().map(|s| s.p)).collect();
    let q = bh_fdr_family(&p, m)?;
    for (entry, q) in family.iter_mut().filter(|e| e.stats.is_some()).zip(q) {
        entry.stats.as_mut().unwrap().q = Some(q);
    }
    Ok(())
}
