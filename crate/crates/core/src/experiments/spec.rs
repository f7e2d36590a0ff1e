use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AggregateSide, BaselineTarget, DeficientPolicy, PairInput, RunOptions, VariantInput};
use crate::emb::{read_embeddings, DatasetManifest, EmbeddingMatrix, PairingPolicy};
use crate::error::{Error, Result};
use crate::metrics::{default_lambda_grid, Direction, Metric};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Align,
    LayerGrid,
    GroupContrast,
    AggregationCurve,
    ShuffledBaseline,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Align => "align",
            ExperimentKind::LayerGrid => "layer_grid",
            ExperimentKind::GroupContrast => "group_contrast",
            ExperimentKind::AggregationCurve => "aggregation_curve",
            ExperimentKind::ShuffledBaseline => "shuffled_baseline",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<PathBuf>,
}

/// One vision–language model pair and its files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPair {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<PathBuf>,
    /// Per-layer files for layer grids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x_layers: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y_layers: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variants: BTreeMap<String, VariantFiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastParams {
    /// Two manifest group labels `[a, b]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
    /// Variant names, each contrasted against the original inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<String>>,
    #[serde(default = "default_min_rows")]
    pub min_rows: usize,
    /// BH family size per direction; defaults to the number of contrasts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_size: Option<usize>,
}

fn default_min_rows() -> usize {
    15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationParams {
    #[serde(default)]
    pub side: AggregateSide,
    pub k_max: usize,
    #[serde(default)]
    pub on_deficient: DeficientPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    #[serde(default)]
    pub target: BaselineTarget,
    #[serde(default = "one")]
    pub shuffles: usize,
}

fn one() -> usize {
    1
}

fn default_directions() -> Vec<Direction> {
    vec![Direction::XToY, Direction::YToX]
}

fn default_folds() -> usize {
    5
}

/// A complete, replayable experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_directions")]
    pub directions: Vec<Direction>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub pairing: PairingPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub pairs: Vec<ModelPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<ContrastParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineParams>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            metric: Metric::default(),
            directions: default_directions(),
            seed: 0,
            folds: default_folds(),
            lambda_grid: default_lambda_grid(),
            pairing: PairingPolicy::default(),
            manifest: None,
            pairs: Vec::new(),
            contrast: None,
            aggregation: None,
            baseline: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = self.manifest.as_mut() {
            fix(m);
        }
        for pair in &mut self.pairs {
            pair.x.iter_mut().chain(pair.y.iter_mut()).for_each(fix);
            pair.x_layers.iter_mut().chain(pair.y_layers.iter_mut()).for_each(fix);
            for v in pair.variants.values_mut() {
                v.x.iter_mut().chain(v.y.iter_mut()).for_each(fix);
            }
        }
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            metric: self.metric,
            directions: self.directions.clone(),
            seed: self.seed,
            folds: self.folds,
            lambda_grid: self.lambda_grid.clone(),
            pairing: self.pairing,
        }
    }

    /// Every file the experiment reads, in a stable order.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = self.manifest.iter().cloned().collect();
        for pair in &self.pairs {
            files.extend(pair.x.iter().chain(pair.y.iter()).cloned());
            files.extend(pair.x_layers.iter().chain(&pair.y_layers).cloned());
            for v in pair.variants.values() {
                files.extend(v.x.iter().chain(v.y.iter()).cloned());
            }
        }
        files
    }

    pub fn validate(&self) -> Result<()> {
        self.options().validate()?;
        if self.pairs.is_empty() {
            return Err(Error::Config("no model pairs configured".into()));
        }
        let needs_xy = self.kind != ExperimentKind::LayerGrid;
        for pair in &self.pairs {
            if needs_xy && (pair.x.is_none() || pair.y.is_none()) {
                return Err(Error::Config(format!("pair {:?} needs both x and y files", pair.name)));
            }
            if !needs_xy && (pair.x_layers.is_empty() || pair.y_layers.is_empty()) {
                return Err(Error::Config(format!(
                    "pair {:?} needs x_layers and y_layers for a layer grid",
                    pair.name
                )));
            }
        }
        match self.kind {
            ExperimentKind::GroupContrast => {
                let c = self
                    .contrast
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing [contrast] section".into()))?;
                match (&c.groups, &c.variants) {
                    (Some(g), None) if g.len() == 2 => {
                        if self.manifest.is_none() {
                            return Err(Error::Config("group contrasts need a manifest".into()));
                        }
                    }
                    (Some(_), None) => {
                        return Err(Error::Config("contrast.groups needs exactly two labels".into()))
                    }
                    (None, Some(v)) if !v.is_empty() => {}
                    _ => {
                        return Err(Error::Config(
                            "set exactly one of contrast.groups or contrast.variants".into(),
                        ))
                    }
                }
            }
            ExperimentKind::AggregationCurve => {
                if self.aggregation.is_none() {
                    return Err(Error::Config("missing [aggregation] section".into()));
                }
                if self.manifest.is_none() {
                    return Err(Error::Config("aggregation curves need a manifest".into()));
                }
            }
            ExperimentKind::ShuffledBaseline => {
                let target = self.baseline.as_ref().map(|b| b.target).unwrap_or_default();
                if target == BaselineTarget::AggregationCurve && self.aggregation.is_none() {
                    return Err(Error::Config(
                        "aggregation-curve baselines need an [aggregation] section".into(),
                    ));
                }
            }
            ExperimentKind::Align | ExperimentKind::LayerGrid => {}
        }
        Ok(())
    }

    pub fn load_manifest(&self) -> Result<Option<DatasetManifest>> {
        self.manifest.as_ref().map(DatasetManifest::load).transpose()
    }

    pub fn load_pairs(&self) -> Result<Vec<PairInput>> {
        self.pairs
            .iter()
            .map(|p| {
                let x = read_required(&p.x, &p.name, "x")?;
                let y = read_required(&p.y, &p.name, "y")?;
                let mut pair = PairInput::new(p.name.clone(), x, y);
                for (name, files) in &p.variants {
                    pair.variants.insert(
                        name.clone(),
                        VariantInput {
                            x: files.x.as_ref().map(read_embeddings).transpose()?,
                            y: files.y.as_ref().map(read_embeddings).transpose()?,
                        },
                    );
                }
                Ok(pair)
            })
            .collect()
    }
}

fn read_required(path: &Option<PathBuf>, pair: &str, side: &str) -> Result<EmbeddingMatrix> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::Config(format!("pair {pair:?} has no {side} file")))?;
    read_embeddings(path)
}
