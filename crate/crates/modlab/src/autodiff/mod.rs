//! A minimal tape-based reverse-mode autodiff engine.
//!
//! Just enough for an encoder-only transformer: dense linear maps, layer
//! normalization, softmax attention, GELU, embedding lookup, pooling, and
//! the two losses. Operations are recorded on a [`Graph`]; calling
//! [`Graph::backward`] walks the tape once in reverse and accumulates
//! gradients additively at fan-out.
//!
//! Determinism contract: every reduction runs in a fixed order, so repeated
//! runs of the same build produce bit-identical values and gradients.
//! Training uses `f32`; gradient checks run the same code in `f64`.

mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointError, CheckpointManifest, TensorEntry,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element types the engine runs on: `f32` for training, `f64` for checks.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    fn c(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn c(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn c(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}
