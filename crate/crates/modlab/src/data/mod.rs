//! Input distributions, label synthesis, and dataset files.

mod dataset;
mod sampler;

pub use dataset::{read_dataset, write_dataset, Dataset, DatasetMeta, DATASET_FORMAT_VERSION};
pub use sampler::{
    aux_label, generate_examples, make_labels, sample_sparse, sample_uniform, select_target,
    sparse_weights,
};

use crate::problem::ProblemSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A length-N input with entries in `{0, ..., q-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputVector {
    entries: Vec<u32>,
}

impl InputVector {
    /// Validates every entry against the modulus.
    pub fn new(entries: Vec<u32>, q: u64) -> Result<Self, DataError> {
        for (index, &value) in entries.iter().enumerate() {
            if value as u64 >= q {
                return Err(DataError::EntryOutOfRange {
                    index,
                    value,
                    modulus: q,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The full sum over the integers (no modulus).
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&v| v as u64).sum()
    }

    /// `n_0(x)`: how many entries are exactly zero.
    pub fn zero_count(&self) -> usize {
        self.entries.iter().filter(|&&v| v == 0).count()
    }
}

/// An input together with its primary label and quotient:
/// `quotient * q + y_q` reconstructs the full sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub x: InputVector,
    /// `f_q(x) = Σ x_i mod q`.
    pub y_q: u64,
    /// `c = floor(Σ x_i / q)`.
    pub quotient: u64,
}

impl LabeledExample {
    /// The full sum `c * q + y_q`.
    pub fn total(&self, q: u64) -> u64 {
        self.quotient * q + self.y_q
    }
}

/// Which modulus a training target was computed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModulusKind {
    PrimaryQ,
    AuxiliaryKq,
}

/// A per-example training target: the label value and the modulus that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingTarget {
    pub value: u64,
    pub modulus_kind: ModulusKind,
}

/// How masked-off positions versus populated positions are filled by the
/// sparse sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseFill {
    /// Populated positions draw uniformly from `{0, ..., q-1}`; a populated
    /// position may still hold a zero. The literal construction; default.
    IncludeZero,
    /// Populated positions draw from `{1, ..., q-1}`, so "z populated
    /// positions" means "z non-zero values". Strict variant, off by default.
    NonZero,
}

/// The input distribution a dataset was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Distribution {
    Uniform,
    Sparse { fill: SparseFill },
}

impl Distribution {
    pub const fn sparse() -> Self {
        Distribution::Sparse {
            fill: SparseFill::IncludeZero,
        }
    }
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Sparse {
                fill: SparseFill::IncludeZero,
            } => write!(f, "sparse"),
            Distribution::Sparse {
                fill: SparseFill::NonZero,
            } => write!(f, "sparse(nonzero)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("entry {value} at position {index} is not below the modulus {modulus}")]
    EntryOutOfRange {
        index: usize,
        value: u32,
        modulus: u64,
    },
    #[error("row {row}: entry {value} at position {index} is not below the modulus {modulus}")]
    RowEntryOutOfRange {
        row: usize,
        index: usize,
        value: u32,
        modulus: u64,
    },
    #[error("row {row}: label fields do not reconstruct the entry sum")]
    RowLabelMismatch { row: usize },
    #[error("file ends mid-row at row {row}")]
    Truncated { row: usize },
    #[error("missing or invalid dataset header: {0}")]
    Header(String),
    #[error("dataset schema version {found} is not the supported {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Validates that a spec is usable for sampling (the `ProblemSpec`
/// constructor enforces the invariants; this re-checks datasets loaded from
/// disk against a requested spec).
pub fn check_spec_matches(meta: &DatasetMeta, spec: &ProblemSpec) -> Result<(), DataError> {
    if meta.n != spec.n || meta.q != spec.q {
        return Err(DataError::Header(format!(
            "dataset is (n={}, q={}) but the run expects (n={}, q={})",
            meta.n, meta.q, spec.n, spec.q
        )));
    }
    Ok(())
}
