//! Fixtures shared by the benchmarks.

use xalign::synth::{generate, SynthConfig, SynthWorld};
use xalign::{align_rows, AlignedSet, PairingPolicy};

/// A synthetic world with `n` items, `d`-dimensional embeddings on both
/// sides and one layer per entry of `layers`.
pub fn world(n: usize, d: usize, layers: Vec<f64>) -> SynthWorld {
    generate(&SynthConfig {
        n_items: n,
        latent_dim: 16,
        d_vision: d,
        d_language: d,
        shared_fraction: layers,
        seed: 1,
        ..Default::default()
    })
    .expect("valid synth config")
}

/// Rows of the first layer pair, matched through the manifest.
pub fn aligned(world: &SynthWorld) -> AlignedSet {
    align_rows(
        &[world.vision[0].clone(), world.language[0].clone()],
        &world.manifest,
        PairingPolicy::OneToOne,
    )
    .expect("synth rows align")
}
