//! Core library: POV cloze compilation, options knowledge mining, multi-task
//! mixture sampling, KSMLM example synthesis, and a small trainable masked
//! language model.

pub mod data_model;
pub mod error;
pub mod ksmlm;
pub mod okr;
pub mod pipeline;
pub mod pov_engine;
pub mod sampler;
pub mod tiny_mlm;

pub use data_model::{RawSample, TaskConfig, Vocabulary};
pub use error::{Error, Result};
pub use okr::OkrRepository;
pub use pov_engine::AugmentedSample;
pub use sampler::SamplerPlan;
pub use tiny_mlm::{ModelConfig, TinyMlm, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one RNG used everywhere; ChaCha8 keyed by a u64 for cross-platform
/// reproducibility.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from (seed, stream), for per-unit RNG
/// streams. SplitMix64 finalizer.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(stream)
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
