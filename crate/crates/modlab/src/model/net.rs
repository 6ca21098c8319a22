//! Parameter storage, initialization, the forward pass, losses, inference,
//! and checkpointing.

use super::{
    decode::{angle_pair, decode_angular, decode_token},
    EmbeddingKind, ModelConfig, ModelError, NormPlacement, Pooling, Prediction::*,
};
use crate::autodiff::{read_checkpoint, write_checkpoint, Graph, NodeId, Scalar, Tensor};
use crate::data::{InputVector, ModulusKind, TrainingTarget};
use crate::rng::{domain, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::path::Path;

const LAYER_NORM_EPS: f64 = 1e-5;

/// One named parameter tensor. `decay` marks whether AdamW's weight decay
/// applies (matrices yes, biases and norm gains no).
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub decay: bool,
}

/// The model bound into a graph for one forward pass: the node ids of its
/// parameters (in `Model::params` order) and of the output.
pub struct BoundModel {
    pub params: Vec<NodeId>,
    pub output: NodeId,
}

/// A decoded model prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    /// Token mode: the restricted argmax class.
    Class(u32),
    /// Angular mode: continuous estimate and its modular rounding.
    Angular { s_hat: f64, s_round: u32 },
}

impl Prediction {
    /// The integer prediction used for match accuracy.
    pub fn class(&self) -> u32 {
        match *self {
            Class(c) => c,
            Angular { s_round, .. } => s_round,
        }
    }

    /// The continuous prediction used for τ-accuracy (integer decodes cast).
    pub fn real(&self) -> f64 {
        match *self {
            Class(c) => c as f64,
            Angular { s_hat, .. } => s_hat,
        }
    }
}

enum ParamInit {
    Embedding,
    Linear { fan_in: usize },
    Ones,
    Zeros,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    decay: bool,
    init: ParamInit,
}

fn layout(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.d_model;
    let f = config.d_ffn;
    let bias = config.bias;
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, decay: bool, init: ParamInit| {
        specs.push(ParamSpec {
            name,
            shape,
            decay,
            init,
        });
    };

    match config.embedding_kind {
        EmbeddingKind::TokenExtended => {
            push(
                "embed.weight".into(),
                vec![config.vocab(), d],
                true,
                ParamInit::Embedding,
            );
        }
        EmbeddingKind::DualAngular => {
            push(
                "lift.weight".into(),
                vec![4, d],
                true,
                ParamInit::Linear { fan_in: 4 },
            );
            if bias {
                push("lift.bias".into(), vec![d], false, ParamInit::Zeros);
            }
        }
    }

    for l in 0..config.layers {
        let mut ln = |tag: &str, specs: &mut Vec<ParamSpec>| {
            specs.push(ParamSpec {
                name: format!("layers.{l}.{tag}.gain"),
                shape: vec![d],
                decay: false,
                init: ParamInit::Ones,
            });
            if bias {
                specs.push(ParamSpec {
                    name: format!("layers.{l}.{tag}.bias"),
                    shape: vec![d],
                    decay: false,
                    init: ParamInit::Zeros,
                });
            }
        };
        ln("ln1", &mut specs);
        for proj in ["wq", "wk", "wv", "wo"] {
            specs.push(ParamSpec {
                name: format!("layers.{l}.attn.{proj}"),
                shape: vec![d, d],
                decay: true,
                init: ParamInit::Linear { fan_in: d },
            });
            if bias {
                specs.push(ParamSpec {
                    name: format!("layers.{l}.attn.{}", proj.replace('w', "b")),
                    shape: vec![d],
                    decay: false,
                    init: ParamInit::Zeros,
                });
            }
        }
        ln("ln2", &mut specs);
        specs.push(ParamSpec {
            name: format!("layers.{l}.ffn.w1"),
            shape: vec![d, f],
            decay: true,
            init: ParamInit::Linear { fan_in: d },
        });
        if bias {
            specs.push(ParamSpec {
                name: format!("layers.{l}.ffn.b1"),
                shape: vec![f],
                decay: false,
                init: ParamInit::Zeros,
            });
        }
        specs.push(ParamSpec {
            name: format!("layers.{l}.ffn.w2"),
            shape: vec![f, d],
            decay: true,
            init: ParamInit::Linear { fan_in: f },
        });
        if bias {
            specs.push(ParamSpec {
                name: format!("layers.{l}.ffn.b2"),
                shape: vec![d],
                decay: false,
                init: ParamInit::Zeros,
            });
        }
    }

    if config.norm_placement == NormPlacement::Pre {
        push(
            "final_ln.gain".into(),
            vec![d],
            false,
            ParamInit::Ones,
        );
        if bias {
            push("final_ln.bias".into(), vec![d], false, ParamInit::Zeros);
        }
    }
    push(
        "head.weight".into(),
        vec![d, config.head_out()],
        true,
        ParamInit::Linear { fan_in: d },
    );
    if bias {
        push(
            "head.bias".into(),
            vec![config.head_out()],
            false,
            ParamInit::Zeros,
        );
    }
    specs
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one value per pair is enough here.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// The encoder-only transformer.
#[derive(Debug, Clone)]
pub struct Model<S> {
    pub config: ModelConfig,
    pub params: Vec<Param<S>>,
}

impl<S: Scalar> Model<S> {
    /// Builds and initializes a model. Weights are drawn from the substream
    /// `(seed, INIT, 0)` per the configured scheme; biases start at zero; no
    /// positional embeddings exist anywhere.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = stream(seed, domain::INIT, 0);
        let sigma002 = matches!(config.init_scheme, super::InitScheme::Sigma002);
        let params: Vec<Param<S>> = layout(&config)
            .into_iter()
            .map(|spec| {
                let data: Vec<S> = match spec.init {
                    ParamInit::Ones => vec![S::one(); spec.shape.iter().product()],
                    ParamInit::Zeros => vec![S::zero(); spec.shape.iter().product()],
                    ParamInit::Embedding | ParamInit::Linear { .. } => {
                        let std = match (&spec.init, sigma002) {
                            (_, true) => 0.02,
                            (ParamInit::Embedding, false) => 1.0,
                            (ParamInit::Linear { fan_in }, false) => {
                                (2.0 / *fan_in as f64).sqrt()
                            }
                            _ => unreachable!(),
                        };
                        (0..spec.shape.iter().product())
                            .map(|_| S::c(normal(&mut rng) * std))
                            .collect()
                    }
                };
                Param {
                    name: spec.name,
                    tensor: Tensor::new(spec.shape, data),
                    decay: spec.decay,
                }
            })
            .collect();
        let model = Self { config, params };
        debug_assert_eq!(model.actual_param_count(), model.config.param_count());
        Ok(model)
    }

    pub fn actual_param_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    fn param_id(&self, ids: &[NodeId], name: &str) -> NodeId {
        let idx = self
            .params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        ids[idx]
    }

    fn maybe_param_id(&self, ids: &[NodeId], name: &str) -> Option<NodeId> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .map(|idx| ids[idx])
    }

    fn validate_inputs(&self, inputs: &[&InputVector]) -> Result<(usize, usize), ModelError> {
        let q = self.config.spec.q;
        let seq = self.config.spec.n;
        for x in inputs {
            assert_eq!(x.len(), seq, "input length must equal the spec's n");
            for (index, &value) in x.entries().iter().enumerate() {
                if value as u64 >= q {
                    return Err(ModelError::EntryOutOfRange {
                        index,
                        value,
                        modulus: q,
                    });
                }
            }
        }
        Ok((inputs.len(), seq))
    }

    /// The dual-angular feature row for one scalar:
    /// `(cos φ, sin φ, cos φ', sin φ')` with `φ = 2πx/q`, `φ' = 2πx/(Kq)`.
    /// Both pairs land exactly on the unit circle.
    pub fn angular_features(&self, value: u32) -> [f64; 4] {
        let (c0, s0) = angle_pair(value as u64, self.config.spec.q);
        let (c1, s1) = angle_pair(value as u64, self.config.spec.aux_modulus());
        [c0, s0, c1, s1]
    }

    /// Forward pass for training: parameters require gradients and dropout
    /// (if configured) is live, drawing its masks from `dropout_rng`.
    pub fn forward_train(
        &self,
        g: &mut Graph<S>,
        inputs: &[&InputVector],
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<BoundModel, ModelError> {
        self.forward_impl(g, inputs, true, Some(dropout_rng))
    }

    /// Forward pass for evaluation: no gradients, no dropout.
    pub fn forward_eval(
        &self,
        g: &mut Graph<S>,
        inputs: &[&InputVector],
    ) -> Result<BoundModel, ModelError> {
        self.forward_impl(g, inputs, false, None)
    }

    fn forward_impl(
        &self,
        g: &mut Graph<S>,
        inputs: &[&InputVector],
        requires_grad: bool,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BoundModel, ModelError> {
        let (batch, seq) = self.validate_inputs(inputs)?;
        let param_ids: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| g.input(p.tensor.clone(), requires_grad))
            .collect();

        let rate = self.config.dropout;
        let mut drop = |g: &mut Graph<S>, x: NodeId, rng: &mut Option<&mut ChaCha8Rng>| match rng {
            Some(rng) if rate > 0.0 => g.dropout(x, rate, rng),
            _ => x,
        };

        // Embedding.
        let mut x = match self.config.embedding_kind {
            EmbeddingKind::TokenExtended => {
                let ids: Vec<u32> = inputs
                    .iter()
                    .flat_map(|x| x.entries().iter().copied())
                    .collect();
                let table = self.param_id(&param_ids, "embed.weight");
                g.embedding(table, &ids)
            }
            EmbeddingKind::DualAngular => {
                let mut features = Vec::with_capacity(batch * seq * 4);
                for x in inputs {
                    for &value in x.entries() {
                        features.extend(self.angular_features(value).map(S::c));
                    }
                }
                let feats = g.constant(Tensor::new(vec![batch * seq, 4], features));
                let w = self.param_id(&param_ids, "lift.weight");
                let b = self.maybe_param_id(&param_ids, "lift.bias");
                g.linear(feats, w, b)
            }
        };
        x = drop(g, x, &mut dropout_rng);

        // Encoder stack.
        for l in 0..self.config.layers {
            let ln1_g = self.param_id(&param_ids, &format!("layers.{l}.ln1.gain"));
            let ln1_b = self.maybe_param_id(&param_ids, &format!("layers.{l}.ln1.bias"));
            let ln2_g = self.param_id(&param_ids, &format!("layers.{l}.ln2.gain"));
            let ln2_b = self.maybe_param_id(&param_ids, &format!("layers.{l}.ln2.bias"));
            let attn = |g: &mut Graph<S>, m: &Self, ids: &[NodeId], y: NodeId| {
                let wq = m.param_id(ids, &format!("layers.{l}.attn.wq"));
                let wk = m.param_id(ids, &format!("layers.{l}.attn.wk"));
                let wv = m.param_id(ids, &format!("layers.{l}.attn.wv"));
                let wo = m.param_id(ids, &format!("layers.{l}.attn.wo"));
                let bq = m.maybe_param_id(ids, &format!("layers.{l}.attn.bq"));
                let bk = m.maybe_param_id(ids, &format!("layers.{l}.attn.bk"));
                let bv = m.maybe_param_id(ids, &format!("layers.{l}.attn.bv"));
                let bo = m.maybe_param_id(ids, &format!("layers.{l}.attn.bo"));
                let q = g.linear(y, wq, bq);
                let k = g.linear(y, wk, bk);
                let v = g.linear(y, wv, bv);
                let a = g.attention(q, k, v, m.config.heads, batch, seq);
                g.linear(a, wo, bo)
            };
            let ffn = |g: &mut Graph<S>, m: &Self, ids: &[NodeId], y: NodeId| {
                let w1 = m.param_id(ids, &format!("layers.{l}.ffn.w1"));
                let w2 = m.param_id(ids, &format!("layers.{l}.ffn.w2"));
                let b1 = m.maybe_param_id(ids, &format!("layers.{l}.ffn.b1"));
                let b2 = m.maybe_param_id(ids, &format!("layers.{l}.ffn.b2"));
                let h = g.linear(y, w1, b1);
                let h = g.gelu(h);
                g.linear(h, w2, b2)
            };

            match self.config.norm_placement {
                NormPlacement::Pre => {
                    let normed = g.layer_norm(x, Some(ln1_g), ln1_b, LAYER_NORM_EPS);
                    let a = attn(g, self, &param_ids, normed);
                    let a = drop(g, a, &mut dropout_rng);
                    x = g.add(x, a);
                    let normed = g.layer_norm(x, Some(ln2_g), ln2_b, LAYER_NORM_EPS);
                    let f = ffn(g, self, &param_ids, normed);
                    let f = drop(g, f, &mut dropout_rng);
                    x = g.add(x, f);
                }
                NormPlacement::Post => {
                    let a = attn(g, self, &param_ids, x);
                    let a = drop(g, a, &mut dropout_rng);
                    let sum = g.add(x, a);
                    x = g.layer_norm(sum, Some(ln1_g), ln1_b, LAYER_NORM_EPS);
                    let f = ffn(g, self, &param_ids, x);
                    let f = drop(g, f, &mut dropout_rng);
                    let sum = g.add(x, f);
                    x = g.layer_norm(sum, Some(ln2_g), ln2_b, LAYER_NORM_EPS);
                }
            }
        }

        if self.config.norm_placement == NormPlacement::Pre {
            let gain = self.param_id(&param_ids, "final_ln.gain");
            let bias = self.maybe_param_id(&param_ids, "final_ln.bias");
            x = g.layer_norm(x, Some(gain), bias, LAYER_NORM_EPS);
        }

        let pooled = match self.config.pooling {
            Pooling::Mean => g.mean_pool(x, batch, seq),
            Pooling::LastToken => g.last_token_pool(x, batch, seq),
        };
        let head_w = self.param_id(&param_ids, "head.weight");
        let head_b = self.maybe_param_id(&param_ids, "head.bias");
        let output = g.linear(pooled, head_w, head_b);
        Ok(BoundModel {
            params: param_ids,
            output,
        })
    }

    /// The training loss for a batch of targets.
    ///
    /// Token mode: cross-entropy over the `Kq`-way logits; primary targets
    /// use class indices `0..q` inside the same softmax. Angular mode:
    /// masked MSE against the circle point of the target, supervising only
    /// the pair selected by the target's modulus; the other pair receives
    /// exactly zero gradient.
    pub fn loss(&self, g: &mut Graph<S>, output: NodeId, targets: &[TrainingTarget]) -> NodeId {
        match self.config.embedding_kind {
            EmbeddingKind::TokenExtended => {
                let classes: Vec<u32> = targets
                    .iter()
                    .map(|t| {
                        debug_assert!(t.value < self.config.vocab() as u64);
                        t.value as u32
                    })
                    .collect();
                g.cross_entropy(output, &classes)
            }
            EmbeddingKind::DualAngular => {
                let mut target = Vec::with_capacity(targets.len() * 4);
                let mut mask = Vec::with_capacity(targets.len() * 4);
                for t in targets {
                    match t.modulus_kind {
                        ModulusKind::PrimaryQ => {
                            let (c, s) = angle_pair(t.value, self.config.spec.q);
                            target.extend([S::c(c), S::c(s), S::zero(), S::zero()]);
                            mask.extend([S::one(), S::one(), S::zero(), S::zero()]);
                        }
                        ModulusKind::AuxiliaryKq => {
                            let (c, s) = angle_pair(t.value, self.config.spec.aux_modulus());
                            target.extend([S::zero(), S::zero(), S::c(c), S::c(s)]);
                            mask.extend([S::zero(), S::zero(), S::one(), S::one()]);
                        }
                    }
                }
                g.mse_masked(output, &target, &mask)
            }
        }
    }

    /// Runs inference and decodes one prediction per input.
    pub fn predict(
        &self,
        inputs: &[&InputVector],
        batch_size: usize,
    ) -> Result<Vec<Prediction>, ModelError> {
        let q = self.config.spec.q;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(batch_size.max(1)) {
            let mut g = Graph::new();
            let bound = self.forward_eval(&mut g, chunk)?;
            let output = g.value(bound.output);
            let (rows, cols) = output.as_2d();
            debug_assert_eq!(rows, chunk.len());
            for row in 0..rows {
                let logits: Vec<f64> = output.data()[row * cols..(row + 1) * cols]
                    .iter()
                    .map(|v| v.as_f64())
                    .collect();
                out.push(match self.config.embedding_kind {
                    EmbeddingKind::TokenExtended => Class(decode_token(&logits, q)),
                    EmbeddingKind::DualAngular => {
                        let d = decode_angular(&logits, q)?;
                        Angular {
                            s_hat: d.s_hat,
                            s_round: d.s_round,
                        }
                    }
                });
            }
        }
        Ok(out)
    }

    /// Writes the model to a checkpoint file. `meta` is merged with the
    /// model config under the manifest's `meta` field.
    pub fn save(&self, path: &Path, extra_meta: serde_json::Value) -> Result<(), ModelError> {
        let meta = serde_json::json!({
            "model_config": self.config,
            "extra": extra_meta,
        });
        let tensors: Vec<(&str, &Tensor<S>)> = self
            .params
            .iter()
            .map(|p| (p.name.as_str(), &p.tensor))
            .collect();
        write_checkpoint(path, &self.config.hash(), meta, &tensors)?;
        Ok(())
    }

    /// Loads a checkpoint written by [`Model::save`], re-deriving the layout
    /// from the embedded config and validating names, shapes, and the
    /// config hash.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (manifest, tensors) = read_checkpoint::<S>(path)?;
        let config: ModelConfig =
            serde_json::from_value(manifest.meta["model_config"].clone())
                .map_err(|e| ModelError::BadCheckpoint(format!("model_config: {e}")))?;
        if manifest.config_hash != config.hash() {
            return Err(ModelError::ConfigHashMismatch {
                found: manifest.config_hash,
                expected: config.hash(),
            });
        }
        let specs = layout(&config);
        if specs.len() != tensors.len() {
            return Err(ModelError::BadCheckpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        let params = specs
            .into_iter()
            .zip(tensors)
            .map(|(spec, (name, tensor))| {
                if spec.name != name {
                    return Err(ModelError::BadCheckpoint(format!(
                        "tensor {name} where {} was expected",
                        spec.name
                    )));
                }
                if spec.shape != tensor.shape() {
                    return Err(ModelError::BadCheckpoint(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        spec.shape
                    )));
                }
                Ok(Param {
                    name,
                    tensor,
                    decay: spec.decay,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { config, params })
    }
}
