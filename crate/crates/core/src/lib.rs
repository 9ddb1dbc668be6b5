//! Concept-centric self-supervised pre-training for a micro text-to-text transformer.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: sentence segmentation, tokenization, part-of-speech tagging and vocabulary.
//! - [`concepts`]: verb/noun concept extraction, seeded permutations and lemmatization.
//! - [`objectives`]: builders for the corrupted training examples and their JSONL form.
//! - [`model`]: an encoder-decoder transformer with hand-written reverse-mode gradients.
//! - [`trainer`]: the mix-warmup and joint generator/discriminator training stages.
//! - [`eval`]: text metrics, discriminator accuracy and order-recovery probes on synthetic worlds.
//! - [`config`] and [`pipeline`]: the run configuration and the operations behind the CLI.

pub mod concepts;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod pipeline;
pub mod trainer;

mod digest;

pub use digest::{file_digest, sha256_hex};
