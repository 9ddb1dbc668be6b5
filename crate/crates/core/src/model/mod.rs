//! Micro encoder-decoder transformer with exact reverse-mode gradients.
//!
//! One [`ParameterStore`] backs every role the model plays: the generator that
//! decodes sentences and the discriminator that scores candidates read the
//! same tensors. Batches are packed: every token of every example is a row of
//! one activation matrix, and attention runs per example.

mod checkpoint;
mod decode;
mod layers;
mod params;
mod scalar;
mod transformer;

pub use checkpoint::{checkpoint_digest, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decode::{decode_batch, decode_greedy, default_max_len};
pub use params::{Gradients, ParameterStore, Tensor};
pub use scalar::{gemm, matmul, Float, View};
pub use transformer::{backward, forward_logits, forward_loss, score, ForwardTrace, SequenceScore};

use crate::corpus::{BOS_ID, EOS_ID, PAD_ID};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ffn: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ffn: 512,
            max_seq_len: 64,
            vocab_size: 0,
            dropout_rate: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ffn == 0 {
            return bad("d_model, n_heads and d_ffn must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be positive".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty {0} sequence")]
    EmptySequence(&'static str),
    #[error("gold and decoder input lengths differ ({gold} vs {input})")]
    LengthMismatch { gold: usize, input: usize },
    #[error("forward trace is stale: parameters changed since the forward pass")]
    StaleTrace,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint manifest error: {0}")]
    Manifest(String),
    #[error("tensor {tensor}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint {field} is {checkpoint} but {requested} was requested")]
    ConfigMismatch {
        field: &'static str,
        checkpoint: String,
        requested: String,
    },
    #[error("non-finite value in tensor {tensor}")]
    NonFinite { tensor: String },
}

/// One teacher-forced pair: encoder input, decoder input, gold outputs and a
/// per-position flag for whether the position counts toward the loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seq2Seq {
    pub src: Vec<u32>,
    pub dec_in: Vec<u32>,
    pub gold: Vec<u32>,
    pub counted: Vec<bool>,
}

impl Seq2Seq {
    /// Decoder input is BOS + tgt; gold is tgt + EOS. PAD gold positions are
    /// not counted.
    pub fn new(src: Vec<u32>, tgt: &[u32]) -> Self {
        let mut dec_in = Vec::with_capacity(tgt.len() + 1);
        dec_in.push(BOS_ID);
        dec_in.extend_from_slice(tgt);
        let mut gold = tgt.to_vec();
        gold.push(EOS_ID);
        let counted = gold.iter().map(|&g| g != PAD_ID).collect();
        Self {
            src,
            dec_in,
            gold,
            counted,
        }
    }

    /// Explicit decoder input, gold and counted flags.
    pub fn raw(src: Vec<u32>, dec_in: Vec<u32>, gold: Vec<u32>, counted: Vec<bool>) -> Self {
        Self {
            src,
            dec_in,
            gold,
            counted,
        }
    }

    pub fn counted_len(&self) -> usize {
        self.counted.iter().filter(|&&c| c).count()
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        if self.src.is_empty() {
            return Err(ModelError::EmptySequence("source"));
        }
        if self.dec_in.is_empty() {
            return Err(ModelError::EmptySequence("decoder"));
        }
        if self.gold.len() != self.dec_in.len() || self.counted.len() != self.dec_in.len() {
            return Err(ModelError::LengthMismatch {
                gold: self.gold.len(),
                input: self.dec_in.len(),
            });
        }
        for len in [self.src.len(), self.dec_in.len()] {
            if len > cfg.max_seq_len {
                return Err(ModelError::SequenceTooLong {
                    len,
                    max: cfg.max_seq_len,
                });
            }
        }
        check_ids(&self.src, cfg.vocab_size)?;
        check_ids(&self.dec_in, cfg.vocab_size)?;
        for (&g, &c) in self.gold.iter().zip(&self.counted) {
            if c {
                check_ids(&[g], cfg.vocab_size)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn check_ids(ids: &[u32], vocab_size: usize) -> Result<(), ModelError> {
    match ids.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(ModelError::TokenOutOfRange { id, vocab_size }),
        None => Ok(()),
    }
}
