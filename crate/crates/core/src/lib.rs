//! Measure how closely two embedding spaces line up.
//!
//! The crate covers the whole measurement path: a portable binary format for
//! per-layer embeddings and the manifest that pairs them ([`emb`]), the
//! alignment metrics themselves ([`metrics`]), the inferential statistics used
//! to compare conditions across model pairs ([`stats`]), a shared-latent
//! synthetic world for testing ([`synth`]), and experiment recipes that tie
//! them together ([`experiments`]).
//!
//! All linear algebra runs single-threaded per call; parallelism lives at the
//! level of folds, grid cells and model pairs so that results do not depend on
//! the worker count.

pub mod emb;
pub mod error;
pub mod experiments;
mod linalg;
pub mod metrics;
pub mod stats;
pub mod synth;

pub use emb::{
    align_by_ids, align_rows, read_embeddings, read_header, write_embeddings, AlignedSet,
    DatasetManifest, Dtype, EmbeddingHeader, EmbeddingMatrix, ManifestItem, Modality,
    PairingPolicy,
};
pub use error::{Error, FormatError, Result};
pub use faer::{Mat, MatRef};
pub use metrics::{
    aggregate_mean, cka_linear, cosine_score, default_lambda_grid, derive_seed, linear_predictivity,
    make_folds, pearson_mean, ridge_solve, AlignmentResult, Direction, FoldPlan, Metric,
    PreparedSource, RidgeFit, RidgePath, Standardizer,
};
pub use stats::{bh_fdr, paired_t, stderr, StatsResult};
