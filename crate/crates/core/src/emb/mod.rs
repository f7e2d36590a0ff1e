//! Embedding files, dataset manifests, and manifest-driven row alignment.

mod align;
mod format;
mod manifest;

pub use align::{align_by_ids, align_rows, AlignedSet, PairingPolicy};
pub use format::{
    read_embeddings, read_header, write_embeddings, Dtype, EmbeddingHeader, EmbeddingMatrix,
    Modality, MAGIC, VERSION,
};
pub use manifest::{DatasetManifest, ManifestItem};
