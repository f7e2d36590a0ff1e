use std::collections::{BTreeSet, HashMap};

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, EmbeddingMatrix, ManifestItem, Modality};
use crate::error::{Error, Result};

/// How manifest pairings become rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingPolicy {
    /// One row per pair key, using the lowest-indexed exemplar on each side.
    #[default]
    OneToOne,
    /// One row per (vision item, language item) combination within a pair key.
    ExpandPairs,
}

/// Row-aligned matrices plus the pair key of every row.
#[derive(Clone, Debug)]
pub struct AlignedSet {
    pub matrices: Vec<EmbeddingMatrix>,
    /// Pair key of each output row; rows sharing a key must stay in one fold.
    pub pair_keys: Vec<String>,
}

impl AlignedSet {
    pub fn rows(&self) -> usize {
        self.pair_keys.len()
    }
}

/// Aligns `matrices` so that row `i` of every output refers to the same
/// manifest pairing.
///
/// Each manifest item is attributed to the modality of the matrices that
/// contain it. Every matrix of a modality must contain every manifest item of
/// that modality; items found in no matrix are reported as missing.
pub fn align_rows(
    matrices: &[EmbeddingMatrix],
    manifest: &DatasetManifest,
    policy: PairingPolicy,
) -> Result<AlignedSet> {
    if matrices.is_empty() {
        return Err(Error::InvalidArgument("no matrices to align".into()));
    }
    let indices: Vec<HashMap<&str, usize>> = matrices.iter().map(|m| m.row_index()).collect();

    let mut missing = Vec::new();
    let mut item_modality: HashMap<&str, Modality> = HashMap::new();
    for item in &manifest.items {
        let id = item.item_id.as_str();
        let found: BTreeSet<Modality> = matrices
            .iter()
            .zip(&indices)
            .filter(|(_, idx)| idx.contains_key(id))
            .map(|(m, _)| m.modality)
            .collect();
        match found.len() {
            0 => missing.push(item.item_id.clone()),
            1 => {
                let modality = *found.iter().next().unwrap();
                for (m, idx) in matrices.iter().zip(&indices) {
                    if m.modality == modality && !idx.contains_key(id) {
                        missing.push(format!("{} (in {})", item.item_id, m.label()));
                    }
                }
                item_modality.insert(id, modality);
            }
            _ => {
                return Err(Error::Manifest(format!(
                    "item {id:?} appears in both vision and language matrices"
                )))
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingItems(missing));
    }

    let modalities: Vec<Modality> = matrices
        .iter()
        .map(|m| m.modality)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    // pair key -> per-modality items, ordered by exemplar index then position
    let mut by_key: Vec<(&str, Vec<Vec<(usize, &ManifestItem)>>)> = Vec::new();
    let mut key_slot: HashMap<&str, usize> = HashMap::new();
    for (pos, item) in manifest.items.iter().enumerate() {
        let slot = *key_slot.entry(item.pair_key.as_str()).or_insert_with(|| {
            by_key.push((item.pair_key.as_str(), vec![Vec::new(); modalities.len()]));
            by_key.len() - 1
        });
        let side = modalities
            .iter()
            .position(|m| *m == item_modality[item.item_id.as_str()])
            .unwrap();
        by_key[slot].1[side].push((pos, item));
    }

    // rows: per pair key, one chosen item id per modality
    let mut rows: Vec<Vec<&str>> = Vec::new();
    let mut pair_keys = Vec::new();
    for (key, mut sides) in by_key {
        for (side, items) in sides.iter_mut().enumerate() {
            if items.is_empty() {
                return Err(Error::Manifest(format!(
                    "pair key {key:?} has no {} item",
                    modalities[side]
                )));
            }
            items.sort_by_key(|(pos, it)| (it.exemplar_index.is_none(), it.exemplar_index, *pos));
        }
        let picks: Vec<Vec<&str>> = sides
            .iter()
            .map(|items| {
                let take = match policy {
                    PairingPolicy::OneToOne => 1,
                    PairingPolicy::ExpandPairs => items.len(),
                };
                items[..take].iter().map(|(_, it)| it.item_id.as_str()).collect()
            })
            .collect();
        for combo in cartesian(&picks) {
            rows.push(combo);
            pair_keys.push(key.to_string());
        }
    }
    if rows.is_empty() {
        return Err(Error::Manifest("manifest and embeddings share no items".into()));
    }

    let mut out = Vec::with_capacity(matrices.len());
    for (m, idx) in matrices.iter().zip(&indices) {
        let side = modalities.iter().position(|x| *x == m.modality).unwrap();
        let picked: Vec<usize> = rows.iter().map(|r| idx[r[side]]).collect();
        let item_ids: Vec<String> = match policy {
            PairingPolicy::OneToOne => rows.iter().map(|r| r[side].to_string()).collect(),
            PairingPolicy::ExpandPairs => rows.iter().map(|r| r.join("|")).collect(),
        };
        let data = Mat::from_fn(picked.len(), m.cols(), |i, j| m.data[(picked[i], j)]);
        let aligned = EmbeddingMatrix {
            item_ids,
            data,
            ..clone_meta(m)
        };
        aligned.validate()?;
        out.push(aligned);
    }
    Ok(AlignedSet {
        matrices: out,
        pair_keys,
    })
}

/// Aligns matrices without a manifest: every matrix must hold exactly the
/// item ids of the first one, and rows are reordered to its order.
pub fn align_by_ids(matrices: &[EmbeddingMatrix]) -> Result<AlignedSet> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidArgument("no matrices to align".into()))?;
    let mut out = Vec::with_capacity(matrices.len());
    for m in matrices {
        let idx = m.row_index();
        if !first.item_ids.iter().any(|id| idx.contains_key(id.as_str())) {
            return Err(Error::Manifest(format!(
                "{} and {} share no item ids; supply a manifest to pair them",
                first.label(),
                m.label()
            )));
        }
        let missing: Vec<String> = first
            .item_ids
            .iter()
            .filter(|id| !idx.contains_key(id.as_str()))
            .map(|id| format!("{id} (in {})", m.label()))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingItems(missing));
        }
        if m.rows() != first.rows() {
            return Err(Error::Manifest(format!(
                "{} has {} rows but {} has {}; supply a manifest",
                m.label(),
                m.rows(),
                first.label(),
                first.rows()
            )));
        }
        let picked: Vec<usize> = first.item_ids.iter().map(|id| idx[id.as_str()]).collect();
        let data = Mat::from_fn(picked.len(), m.cols(), |i, j| m.data[(picked[i], j)]);
        out.push(EmbeddingMatrix {
            item_ids: first.item_ids.clone(),
            data,
            ..clone_meta(m)
        });
    }
    Ok(AlignedSet {
        matrices: out,
        pair_keys: first.item_ids.clone(),
    })
}

fn clone_meta(m: &EmbeddingMatrix) -> EmbeddingMatrix {
    EmbeddingMatrix {
        model_id: m.model_id.clone(),
        layer_index: m.layer_index,
        modality: m.modality,
        variant: m.variant.clone(),
        item_ids: Vec::new(),
        data: Mat::zeros(0, 0),
        dtype: m.dtype,
    }
}

fn cartesian<'a>(sides: &[Vec<&'a str>]) -> Vec<Vec<&'a str>> {
    let mut acc: Vec<Vec<&str>> = vec![Vec::new()];
    for side in sides {
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                side.iter().map(move |id| {
                    let mut next = prefix.clone();
                    next.push(id);
                    next
                })
            })
            .collect();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(modality: Modality, ids: &[&str]) -> EmbeddingMatrix {
        let data = Mat::from_fn(ids.len(), 2, |i, j| (i * 10 + j) as f64);
        EmbeddingMatrix::new(
            "m",
            0,
            modality,
            "original",
            ids.iter().map(|s| s.to_string()).collect(),
            data,
        )
        .unwrap()
    }

    fn one_image_five_captions() -> (Vec<EmbeddingMatrix>, DatasetManifest) {
        let caps = ["c0", "c1", "c2", "c3", "c4"];
        let mut items = vec![ManifestItem::new("img_0", "p0"), ManifestItem::new("img_1", "p1")];
        for (i, c) in caps.iter().enumerate() {
            items.push(ManifestItem::new(*c, "p0").with_exemplar(i as u32));
        }
        items.push(ManifestItem::new("c5", "p1"));
        let manifest = DatasetManifest::new("d", items).unwrap();
        let v = matrix(Modality::Vision, &["img_0", "img_1"]);
        let l = matrix(Modality::Language, &["c0", "c1", "c2", "c3", "c4", "c5"]);
        (vec![v, l], manifest)
    }

    #[test]
    fn expand_pairs_repeats_image_rows() {
        let (ms, manifest) = one_image_five_captions();
        let out = align_rows(&ms, &manifest, PairingPolicy::ExpandPairs).unwrap();
        assert_eq!(out.rows(), 6);
        let v = &out.matrices[0];
        for i in 0..5 {
            assert_eq!(v.data[(i, 0)], 0.0);
        }
        assert_eq!(v.data[(5, 0)], 10.0);
        assert_eq!(out.matrices[1].item_ids[2], "img_0|c2");
        assert_eq!(&out.pair_keys[..], ["p0", "p0", "p0", "p0", "p0", "p1"]);
    }

    #[test]
    fn one_to_one_takes_lowest_exemplar() {
        let (ms, manifest) = one_image_five_captions();
        let out = align_rows(&ms, &manifest, PairingPolicy::OneToOne).unwrap();
        assert_eq!(out.matrices[1].item_ids, ["c0", "c5"]);
    }

    #[test]
    fn aligned_inputs_keep_order() {
        let v = matrix(Modality::Vision, &["a", "b", "c"]);
        let l = matrix(Modality::Language, &["x", "y", "z"]);
        let manifest = DatasetManifest::new(
            "d",
            vec![
                ManifestItem::new("a", "1"),
                ManifestItem::new("x", "1"),
                ManifestItem::new("b", "2"),
                ManifestItem::new("y", "2"),
                ManifestItem::new("c", "3"),
                ManifestItem::new("z", "3"),
            ],
        )
        .unwrap();
        let out = align_rows(&[v.clone(), l.clone()], &manifest, PairingPolicy::OneToOne).unwrap();
        assert_eq!(out.matrices[0], v);
        assert_eq!(out.matrices[1], l);
    }

    #[test]
    fn missing_item_is_named() {
        let (ms, mut manifest) = one_image_five_captions();
        manifest.items.push(ManifestItem::new("img_999", "p1"));
        let err = align_rows(&ms, &manifest, PairingPolicy::OneToOne).unwrap_err();
        assert!(err.to_string().contains("img_999"), "{err}");
    }

    #[test]
    fn key_without_partner_is_rejected() {
        let v = matrix(Modality::Vision, &["a", "b"]);
        let l = matrix(Modality::Language, &["x", "y"]);
        let manifest = DatasetManifest::new(
            "d",
            vec![
                ManifestItem::new("a", "1"),
                ManifestItem::new("x", "1"),
                ManifestItem::new("b", "2"),
                ManifestItem::new("y", "3"),
            ],
        )
        .unwrap();
        assert!(align_rows(&[v, l], &manifest, PairingPolicy::OneToOne).is_err());
    }

    #[test]
    fn by_ids_reorders() {
        let a = matrix(Modality::Vision, &["a", "b", "c"]);
        let b = matrix(Modality::Vision, &["c", "a", "b"]);
        let out = align_by_ids(&[a, b]).unwrap();
        assert_eq!(out.matrices[1].item_ids, ["a", "b", "c"]);
        assert_eq!(out.matrices[1].data[(0, 0)], 10.0);
    }
}
