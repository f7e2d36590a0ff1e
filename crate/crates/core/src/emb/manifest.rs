use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row-level entry of a [`DatasetManifest`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub item_id: String,
    /// Links every image and caption describing the same content.
    pub pair_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Which of the k exemplars for this pair key (captions or images).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_index: Option<u32>,
}

impl ManifestItem {
    pub fn new(item_id: impl Into<String>, pair_key: impl Into<String>) -> Self {
        ManifestItem {
            item_id: item_id.into(),
            pair_key: pair_key.into(),
            group: None,
            exemplar_index: None,
        }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn with_exemplar(mut self, index: u32) -> Self {
        self.exemplar_index = Some(index);
        self
    }
}

/// Item identities, cross-modal pairings and group labels for one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn new(dataset_id: impl Into<String>, items: Vec<ManifestItem>) -> Result<Self> {
        let m = DatasetManifest {
            dataset_id: dataset_id.into(),
            items,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Manifest("manifest has no items".into()));
        }
        let mut seen = HashSet::with_capacity(self.items.len());
        for item in &self.items {
            if item.item_id.is_empty() || item.pair_key.is_empty() {
                return Err(Error::Manifest("empty item_id or pair_key".into()));
            }
            if !seen.insert(item.item_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate item_id {:?}", item.item_id)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Pair keys in order of first appearance.
    pub fn pair_keys(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.items
            .iter()
            .filter(|it| seen.insert(it.pair_key.as_str()))
            .map(|it| it.pair_key.as_str())
            .collect()
    }

    pub fn get(&self, item_id: &str) -> Option<&ManifestItem> {
        self.items.iter().find(|it| it.item_id == item_id)
    }

    /// Keeps one group's view of the dataset.
    ///
    /// Within each pair key, the items of `side` (the ids of one modality)
    /// that carry any group label are narrowed to those labelled `label`;
    /// unlabelled sides are left intact.
    pub fn select_group(&self, label: &str, side: &HashSet<&str>) -> DatasetManifest {
        let mut labelled_keys: HashSet<&str> = HashSet::new();
        for it in &self.items {
            if it.group.is_some() && side.contains(it.item_id.as_str()) {
                labelled_keys.insert(it.pair_key.as_str());
            }
        }
        let items = self
            .items
            .iter()
            .filter(|it| {
                if !side.contains(it.item_id.as_str())
                    || !labelled_keys.contains(it.pair_key.as_str())
                {
                    return true;
                }
                it.group.as_deref() == Some(label)
            })
            .cloned()
            .collect();
        DatasetManifest {
            dataset_id: self.dataset_id.clone(),
            items,
        }
    }

    /// Returns a copy where the listed items take the pair key found at
    /// `permutation` of their own key's position in [`Self::pair_keys`].
    pub fn remap_pair_keys(&self, side: &HashSet<&str>, permutation: &[usize]) -> Result<Self> {
        let keys = self.pair_keys();
        if keys.len() != permutation.len() {
            return Err(Error::InvalidArgument(format!(
                "permutation of length {} for {} pair keys",
                permutation.len(),
                keys.len()
            )));
        }
        let position: HashMap<&str, usize> =
            keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let items = self
            .items
            .iter()
            .map(|it| {
                let mut it = it.clone();
                if side.contains(it.item_id.as_str()) {
                    let at = position[it.pair_key.as_str()];
                    it.pair_key = keys[permutation[at]].to_string();
                }
                it
            })
            .collect();
        Ok(DatasetManifest {
            dataset_id: self.dataset_id.clone(),
            items,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_ids() {
        let err = DatasetManifest::new(
            "d",
            vec![ManifestItem::new("a", "p"), ManifestItem::new("a", "q")],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn json_roundtrip_omits_empty_fields() {
        let m = DatasetManifest::new(
            "coco",
            vec![
                ManifestItem::new("img_0", "p0"),
                ManifestItem::new("cap_0", "p0").with_exemplar(0).with_group("high_clip"),
            ],
        )
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(!text.contains("null"));
        let back: DatasetManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn select_group_keeps_unlabelled_side() {
        let m = DatasetManifest::new(
            "pick",
            vec![
                ManifestItem::new("cap_0", "p0"),
                ManifestItem::new("img_a", "p0").with_group("preferred"),
                ManifestItem::new("img_b", "p0").with_group("non_preferred"),
            ],
        )
        .unwrap();
        let side: HashSet<&str> = ["img_a", "img_b"].into_iter().collect();
        let sel = m.select_group("preferred", &side);
        let ids: Vec<_> = sel.items.iter().map(|it| it.item_id.as_str()).collect();
        assert_eq!(ids, ["cap_0", "img_a"]);
    }
}
