//! Seeded shared-latent world for oracles and qualitative checks.
//!
//! Every item has a shared latent code `z` and, per modality, a private code
//! `p`. Exemplar `e` of an item at layer `l` of modality `m` is
//!
//! ```text
//! f_l · z A_m + (1 − f_l) · p_m B_m + σ_m · ε_{m,l,e}
//! ```
//!
//! with fixed Gaussian mixing matrices `A_m`, `B_m` (entries `N(0, 1/latent)`)
//! and fresh standard-normal noise `ε` per modality, layer and exemplar.
//! `f_l` is the layer's shared fraction. Values are rounded to `f32` so that
//! in-memory matrices equal what is written to disk.

use std::path::{Path, PathBuf};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::emb::{write_embeddings, DatasetManifest, EmbeddingMatrix, ManifestItem, Modality};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_items: usize,
    pub latent_dim: usize,
    pub d_vision: usize,
    pub d_language: usize,
    pub noise_vision: f64,
    pub noise_language: f64,
    /// One entry per simulated layer, shared by both modalities.
    pub shared_fraction: Vec<f64>,
    pub exemplars_vision: usize,
    pub exemplars_language: usize,
    /// When set, even items are labelled `preferred` and get their noise
    /// scaled by this factor; odd items are labelled `non_preferred`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preferred_noise_scale: Option<f64>,
    pub seed: u64,
    pub vision_model: String,
    pub language_model: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_items: 500,
            latent_dim: 16,
            d_vision: 32,
            d_language: 32,
            noise_vision: 0.5,
            noise_language: 0.5,
            shared_fraction: vec![0.8],
            exemplars_vision: 1,
            exemplars_language: 1,
            preferred_noise_scale: None,
            seed: 0,
            vision_model: "synth-vision".into(),
            language_model: "synth-language".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_items", self.n_items),
            ("latent_dim", self.latent_dim),
            ("d_vision", self.d_vision),
            ("d_language", self.d_language),
            ("exemplars_vision", self.exemplars_vision),
            ("exemplars_language", self.exemplars_language),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.n_items < 2 {
            return Err(Error::Config("n_items must be at least 2".into()));
        }
        if self.shared_fraction.is_empty() {
            return Err(Error::Config("shared_fraction needs at least one layer".into()));
        }
        if let Some(f) = self.shared_fraction.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("shared_fraction {f} outside [0, 1]")));
        }
        for s in [self.noise_vision, self.noise_language, self.preferred_noise_scale.unwrap_or(1.0)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("noise sigma {s} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Generated per-layer matrices for both modalities and their manifest.
#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub vision: Vec<EmbeddingMatrix>,
    pub language: Vec<EmbeddingMatrix>,
    pub manifest: DatasetManifest,
}

/// File locations written by [`SynthWorld::write_to`].
#[derive(Clone, Debug, Serialize)]
pub struct SynthFiles {
    pub vision: Vec<PathBuf>,
    pub language: Vec<PathBuf>,
    pub manifest: PathBuf,
}

impl SynthWorld {
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<SynthFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = SynthFiles {
            vision: Vec::new(),
            language: Vec::new(),
            manifest: dir.join("manifest.json"),
        };
        for m in &self.vision {
            let path = dir.join(format!("vision_l{}.emb", m.layer_index));
            write_embeddings(m, &path)?;
            files.vision.push(path);
        }
        for m in &self.language {
            let path = dir.join(format!("language_l{}.emb", m.layer_index));
            write_embeddings(m, &path)?;
            files.language.push(path);
        }
        self.manifest.save(&files.manifest)?;
        Ok(files)
    }
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Mat<f64> {
        let rng = &mut self.0;
        Mat::from_fn(rows, cols, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v * scale
        })
    }
}

fn item_ids(prefix: &str, n: usize, exemplars: usize) -> Vec<String> {
    let mut ids = Vec::with_capacity(n * exemplars);
    for i in 0..n {
        for e in 0..exemplars {
            ids.push(if exemplars == 1 && prefix == "img" {
                format!("{prefix}_{i:05}")
            } else {
                format!("{prefix}_{i:05}_{e}")
            });
        }
    }
    ids
}

pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let n = config.n_items;
    let k = config.latent_dim;
    let mix = 1.0 / (k as f64).sqrt();
    let mut s = Sampler(ChaCha8Rng::seed_from_u64(config.seed));

    let z = s.matrix(n, k, 1.0);
    let shared_v = &z * s.matrix(k, config.d_vision, mix);
    let shared_l = &z * s.matrix(k, config.d_language, mix);
    let private_v = s.matrix(n, k, 1.0) * s.matrix(k, config.d_vision, mix);
    let private_l = s.matrix(n, k, 1.0) * s.matrix(k, config.d_language, mix);

    let vision_ids = item_ids("img", n, config.exemplars_vision);
    let language_ids = item_ids("cap", n, config.exemplars_language);

    let noise_scale = |i: usize| match config.preferred_noise_scale {
        Some(scale) if i % 2 == 0 => scale,
        _ => 1.0,
    };
    let group = |i: usize| (if i % 2 == 0 { "preferred" } else { "non_preferred" }).to_string();

    let mut vision = Vec::new();
    let mut language = Vec::new();
    for (layer, &f) in config.shared_fraction.iter().enumerate() {
        for (modality, shared, private, sigma, exemplars, ids, out, model) in [
            (
                Modality::Vision,
                &shared_v,
                &private_v,
                config.noise_vision,
                config.exemplars_vision,
                &vision_ids,
                &mut vision,
                &config.vision_model,
            ),
            (
                Modality::Language,
                &shared_l,
                &private_l,
                config.noise_language,
                config.exemplars_language,
                &language_ids,
                &mut language,
                &config.language_model,
            ),
        ] {
            let d = shared.ncols();
            let noise = s.matrix(n * exemplars, d, sigma);
            let data = Mat::from_fn(n * exemplars, d, |r, j| {
                let i = r / exemplars;
                let v = f * shared[(i, j)] + (1.0 - f) * private[(i, j)] + noise_scale(i) * noise[(r, j)];
                v as f32 as f64
            });
            out.push(EmbeddingMatrix::new(
                model.clone(),
                layer as u32,
                modality,
                "original",
                ids.clone(),
                data,
            )?);
        }
    }

    let mut items = Vec::with_capacity(n * (config.exemplars_vision + config.exemplars_language));
    for i in 0..n {
        let key = format!("p{i:05}");
        let ids = vision_ids[i * config.exemplars_vision..(i + 1) * config.exemplars_vision]
            .iter()
            .chain(&language_ids[i * config.exemplars_language..(i + 1) * config.exemplars_language]);
        for (pos, id) in ids.enumerate() {
            let e = if pos < config.exemplars_vision { pos } else { pos - config.exemplars_vision };
            let mut item = ManifestItem::new(id.clone(), key.clone()).with_exemplar(e as u32);
            if config.preferred_noise_scale.is_some() {
                item = item.with_group(group(i));
            }
            items.push(item);
        }
    }
    let manifest = DatasetManifest::new(format!("synth-{}", config.seed), items)?;
    Ok(SynthWorld {
        vision,
        language,
        manifest,
    })
}
