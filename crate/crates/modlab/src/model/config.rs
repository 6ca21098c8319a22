//! Architecture configuration, including the four variation axes
//! (norm placement, bias, init scheme, dropout) swept in the robustness
//! study.

use super::ModelError;
use crate::problem::ProblemSpec;
use crate::util::config_hash;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Token lookup into a `Kq`-row table.
    TokenExtended,
    /// Scalars mapped to `(cos φ, sin φ, cos φ', sin φ')`, then lifted.
    DualAngular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Every linear and embedding weight from `N(0, 0.02²)`.
    Sigma002,
    /// Embeddings from `N(0, 1)`, linear weights Kaiming fan-in normal.
    DefaultKaiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean over the sequence axis; permutation-invariant. Default.
    Mean,
    /// The final position's hidden state.
    LastToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_kind: EmbeddingKind,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub norm_placement: NormPlacement,
    /// When false, every learnable bias (including layer-norm offsets) is
    /// removed.
    pub bias: bool,
    pub init_scheme: InitScheme,
    pub dropout: f64,
    pub pooling: Pooling,
    pub spec: ProblemSpec,
}

impl ModelConfig {
    /// The reference architecture: 4 layers, 4 heads, d_model 256,
    /// d_ffn 2048, pre-norm, biases, Kaiming init, no dropout, mean pooling.
    pub fn reference(embedding_kind: EmbeddingKind, spec: ProblemSpec) -> Self {
        Self {
            embedding_kind,
            layers: 4,
            heads: 4,
            d_model: 256,
            d_ffn: 2048,
            norm_placement: NormPlacement::Pre,
            bias: true,
            init_scheme: InitScheme::DefaultKaiming,
            dropout: 0.0,
            pooling: Pooling::Mean,
            spec,
        }
    }

    /// A desk-scale model that trains in minutes on one CPU core:
    /// 2 layers, 2 heads, d_model 64, d_ffn 256.
    pub fn small(embedding_kind: EmbeddingKind, spec: ProblemSpec) -> Self {
        Self {
            layers: 2,
            heads: 2,
            d_model: 64,
            d_ffn: 256,
            ..Self::reference(embedding_kind, spec)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 {
            return Err(ModelError::InvalidConfig("layers must be positive".into()));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} must divide into heads {}",
                self.d_model, self.heads
            )));
        }
        if self.d_ffn == 0 || self.d_model == 0 {
            return Err(ModelError::InvalidConfig("zero width".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Dropout values used by the architecture sweeps; anything else is
    /// legal but flagged by the CLI.
    pub fn dropout_is_standard(&self) -> bool {
        self.dropout == 0.0 || self.dropout == 0.1
    }

    /// Vocabulary size in token mode: the extended `Kq`.
    pub fn vocab(&self) -> usize {
        (self.spec.k * self.spec.q) as usize
    }

    /// Output width of the head: `Kq` logits or the 4-vector.
    pub fn head_out(&self) -> usize {
        match self.embedding_kind {
            EmbeddingKind::TokenExtended => self.vocab(),
            EmbeddingKind::DualAngular => 4,
        }
    }

    /// Closed-form parameter count; the build asserts the constructed model
    /// matches it.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let f = self.d_ffn;
        let b = self.bias as usize;
        let ln = d + b * d;
        let attn = 4 * d * d + b * 4 * d;
        let ffn = d * f + f * d + b * (f + d);
        let per_layer = 2 * ln + attn + ffn;
        let embed = match self.embedding_kind {
            EmbeddingKind::TokenExtended => self.vocab() * d,
            EmbeddingKind::DualAngular => 4 * d + b * d,
        };
        let final_ln = match self.norm_placement {
            NormPlacement::Pre => ln,
            NormPlacement::Post => 0,
        };
        let head = d * self.head_out() + b * self.head_out();
        embed + self.layers * per_layer + final_ln + head
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// All 16 combinations of the four variation axes applied to a base config.
pub fn appendix_b_variants(base: &ModelConfig) -> Vec<ModelConfig> {
    let mut out = Vec::with_capacity(16);
    for norm in [NormPlacement::Pre, NormPlacement::Post] {
        for bias in [true, false] {
            for init in [InitScheme::Sigma002, InitScheme::DefaultKaiming] {
                for dropout in [0.0, 0.1] {
                    out.push(ModelConfig {
                        norm_placement: norm,
                        bias,
                        init_scheme: init,
                        dropout,
                        ..base.clone()
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ProblemSpec {
        ProblemSpec::new(8, 31, 5, 0.2).unwrap()
    }

    #[test]
    fn reference_matches_protocol() {
        let c = ModelConfig::reference(EmbeddingKind::TokenExtended, spec());
        assert_eq!(
            (c.layers, c.heads, c.d_model, c.d_ffn),
            (4, 4, 256, 2048)
        );
        assert_eq!(c.vocab(), 155);
        assert_eq!(c.head_out(), 155);
        c.validate().unwrap();
    }

    #[test]
    fn validation_rejects_indivisible_heads() {
        let mut c = ModelConfig::reference(EmbeddingKind::TokenExtended, spec());
        c.heads = 3;
        assert!(c.validate().is_err());
        c.heads = 4;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sixteen_variants() {
        let base = ModelConfig::small(EmbeddingKind::TokenExtended, spec());
        let variants = appendix_b_variants(&base);
        assert_eq!(variants.len(), 16);
        let hashes: std::collections::HashSet<_> =
            variants.iter().map(|v| v.hash()).collect();
        assert_eq!(hashes.len(), 16);
    }

    #[test]
    fn angular_head_is_four_wide() {
        let c = ModelConfig::small(EmbeddingKind::DualAngular, spec());
        assert_eq!(c.head_out(), 4);
    }
}
