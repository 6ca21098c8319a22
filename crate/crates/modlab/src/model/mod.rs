//! The encoder-only transformer with its two input/output schemes.
//!
//! Token mode extends the vocabulary to `{0, ..., Kq-1}` and trains a
//! `Kq`-way classifier; at inference only the first `q` logits are read.
//! Dual-angular mode embeds each scalar on two circles, `(cos φ, sin φ)`
//! with `φ = 2πx/q` and `(cos φ', sin φ')` with `φ' = 2πx/(Kq)`, and reads a
//! 4-dimensional regression head back out; the first pair predicts the
//! primary answer.
//!
//! No positional embeddings anywhere: with mean pooling the network is
//! permutation-invariant, matching the symmetry of the task.

mod config;
mod decode;
mod net;

pub use config::{
    appendix_b_variants, EmbeddingKind, InitScheme, ModelConfig, NormPlacement, Pooling,
};
pub use decode::{angle_pair, decode_angular, decode_token, AngularDecode};
pub use net::{BoundModel, Model, Param, Prediction};

use crate::autodiff::CheckpointError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input entry {value} at position {index} is not below the modulus {modulus}")]
    EntryOutOfRange {
        index: usize,
        value: u32,
        modulus: u64,
    },
    #[error("angular output has a degenerate (0, 0) primary pair")]
    DegenerateAngularOutput,
    #[error("checkpoint was written for config hash {found}, expected {expected}")]
    ConfigHashMismatch { found: String, expected: String },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
