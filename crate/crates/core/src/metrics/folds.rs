use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seeded assignment of items to cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_items: usize,
    pub n_folds: usize,
    pub seed: u64,
    /// Fold index of every item.
    pub assignments: Vec<usize>,
    /// Dense group id of every item, when the plan was built with groups.
    /// Nested splits inherit these so grouped rows never straddle folds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<usize>>,
}

impl FoldPlan {
    /// `(train, test)` row indices for one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.n_items);
        let mut test = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Folds over a subset of rows, for nested cross-validation. Group
    /// membership carries over to the subset.
    pub fn nested(&self, rows: &[usize], n_folds: usize, seed: u64) -> Result<FoldPlan> {
        match &self.groups {
            Some(g) => {
                let sub: Vec<usize> = rows.iter().map(|&r| g[r]).collect();
                make_folds(rows.len(), n_folds, seed, Some(&sub))
            }
            None => make_folds::<usize>(rows.len(), n_folds, seed, None),
        }
    }
}

/// Shuffled k-fold assignment.
///
/// Groups (e.g. pair keys) are visited in a seeded random order, largest
/// first, and each is placed whole into the currently smallest fold (lowest
/// index on ties). Without groups every item is its own group, which yields
/// folds whose sizes differ by at most one.
pub fn make_folds<G: Hash + Eq>(
    n_items: usize,
    n_folds: usize,
    seed: u64,
    groups: Option<&[G]>,
) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_items < n_folds {
        return Err(Error::InvalidArgument(format!(
            "{n_items} items cannot fill {n_folds} folds"
        )));
    }
    let dense: Option<Vec<usize>> = match groups {
        Some(g) => {
            if g.len() != n_items {
                return Err(Error::InvalidArgument(format!(
                    "{} group labels for {n_items} items",
                    g.len()
                )));
            }
            let mut ids: HashMap<&G, usize> = HashMap::new();
            Some(
                g.iter()
                    .map(|label| {
                        let next = ids.len();
                        *ids.entry(label).or_insert(next)
                    })
                    .collect(),
            )
        }
        None => None,
    };

    let n_groups = dense
        .as_ref()
        .map(|d| d.iter().copied().max().map_or(0, |m| m + 1))
        .unwrap_or(n_items);
    if n_groups < n_folds {
        return Err(Error::InvalidArgument(format!(
            "{n_groups} groups cannot fill {n_folds} folds"
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    match &dense {
        Some(d) => d.iter().enumerate().for_each(|(i, &g)| members[g].push(i)),
        None => (0..n_items).for_each(|i| members[i].push(i)),
    }

    let mut order: Vec<usize> = (0..n_groups).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by(|a, b| members[*b].len().cmp(&members[*a].len()));

    let mut assignments = vec![0; n_items];
    let mut load = vec![0usize; n_folds];
    for g in order {
        let fold = (0..n_folds).min_by_key(|&f| (load[f], f)).unwrap();
        load[fold] += members[g].len();
        for &i in &members[g] {
            assignments[i] = fold;
        }
    }
    Ok(FoldPlan {
        n_items,
        n_folds,
        seed,
        assignments,
        groups: dense,
    })
}
