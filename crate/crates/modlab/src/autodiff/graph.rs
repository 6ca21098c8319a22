//! The computation tape: forward ops record themselves, `backward` replays
//! them in reverse.

use super::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

struct Node<S> {
    tensor: Tensor<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

enum Op<S> {
    Matmul {
        a: NodeId,
        b: NodeId,
        out: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Add {
        a: NodeId,
        b: NodeId,
        out: NodeId,
    },
    AddBias {
        x: NodeId,
        bias: NodeId,
        out: NodeId,
        rows: usize,
        cols: usize,
    },
    Scale {
        x: NodeId,
        out: NodeId,
        factor: S,
    },
    Embedding {
        table: NodeId,
        ids: Vec<u32>,
        out: NodeId,
        dim: usize,
    },
    LayerNorm {
        x: NodeId,
        gain: Option<NodeId>,
        bias: Option<NodeId>,
        out: NodeId,
        rows: usize,
        cols: usize,
        rstd: Vec<S>,
        normalized: Vec<S>,
    },
    Softmax {
        x: NodeId,
        out: NodeId,
        rows: usize,
        cols: usize,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        out: NodeId,
        batch: usize,
        seq: usize,
        heads: usize,
        head_dim: usize,
        probs: Vec<S>,
    },
    Gelu {
        x: NodeId,
        out: NodeId,
    },
    MeanPool {
        x: NodeId,
        out: NodeId,
        batch: usize,
        seq: usize,
        cols: usize,
    },
    LastTokenPool {
        x: NodeId,
        out: NodeId,
        batch: usize,
        seq: usize,
        cols: usize,
    },
    Dropout {
        x: NodeId,
        out: NodeId,
        mask: Vec<S>,
    },
    CrossEntropy {
        logits: NodeId,
        out: NodeId,
        targets: Vec<u32>,
        probs: Vec<S>,
        rows: usize,
        cols: usize,
    },
    Mse {
        pred: NodeId,
        target: NodeId,
        out: NodeId,
    },
    MseMasked {
        pred: NodeId,
        out: NodeId,
        target: Vec<S>,
        mask: Vec<S>,
        mask_total: S,
    },
    Sum {
        x: NodeId,
        out: NodeId,
    },
    /// Placeholder swapped in while an op is being processed.
    Noop,
}

/// A dynamic computation graph over scalars of type `S`.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    tape: Vec<Op<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            tape: Vec::new(),
        }
    }

    /// Inserts a leaf tensor. Gradients accumulate into it iff
    /// `requires_grad`.
    pub fn input(&mut self, tensor: Tensor<S>, requires_grad: bool) -> NodeId {
        self.push(tensor, requires_grad)
    }

    /// Inserts a leaf that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<S>) -> NodeId {
        self.push(tensor, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].tensor
    }

    pub fn scalar_value(&self, id: NodeId) -> S {
        let t = self.value(id);
        assert_eq!(t.len(), 1, "node is not a scalar");
        t.data()[0]
    }

    /// The gradient accumulated by the last `backward` call, if any.
    pub fn grad(&self, id: NodeId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].tensor.shape()
    }

    /// Whether the node's values are all finite; the cheap diagnostics hook
    /// callers run on losses and gradients.
    pub fn is_finite(&self, id: NodeId) -> bool {
        self.nodes[id.0].tensor.is_finite()
    }

    fn push(&mut self, tensor: Tensor<S>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            tensor,
            requires_grad,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn data(&self, id: NodeId) -> &[S] {
        self.nodes[id.0].tensor.data()
    }

    // ---- primitives ----

    /// `C = A · B` for `A: (m, k)`, `B: (k, n)`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, ka) = self.nodes[a.0].tensor.as_2d();
        let bs = self.nodes[b.0].tensor.shape();
        assert_eq!(bs.len(), 2, "matmul rhs must be 2-d, got {bs:?}");
        let (kb, n) = (bs[0], bs[1]);
        assert_eq!(ka, kb, "matmul inner dims differ: {ka} vs {kb}");
        let mut out = vec![S::zero(); m * n];
        mm_acc(self.data(a), self.data(b), m, ka, n, &mut out);
        let rg = self.rg(a) || self.rg(b);
        let id = self.push(Tensor::new(vec![m, n], out), rg);
        if rg {
            self.tape.push(Op::Matmul {
                a,
                b,
                out: id,
                m,
                k: ka,
                n,
            });
        }
        id
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "add requires matching shapes"
        );
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        let id = self.push(Tensor::new(shape, data), rg);
        if rg {
            self.tape.push(Op::Add { a, b, out: id });
        }
        id
    }

    /// Adds a length-`cols` bias to every row of `x: (rows, cols)`. The only
    /// broadcast the engine supports besides scalar scaling.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (rows, cols) = self.nodes[x.0].tensor.as_2d();
        assert_eq!(self.nodes[bias.0].tensor.len(), cols, "bias length");
        let xd = self.data(x);
        let bd = self.data(bias);
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(xd[r * cols + c] + bd[c]);
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        let shape = self.shape(x).to_vec();
        let id = self.push(Tensor::new(shape, out), rg);
        if rg {
            self.tape.push(Op::AddBias {
                x,
                bias,
                out: id,
                rows,
                cols,
            });
        }
        id
    }

    /// Multiplies every element by a scalar constant.
    pub fn scale(&mut self, x: NodeId, factor: S) -> NodeId {
        let data = self.data(x).iter().map(|&v| v * factor).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        let id = self.push(Tensor::new(shape, data), rg);
        if rg {
            self.tape.push(Op::Scale {
                x,
                out: id,
                factor,
            });
        }
        id
    }

    /// Looks rows of `table: (vocab, dim)` up by id.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32]) -> NodeId {
        let ts = self.shape(table);
        assert_eq!(ts.len(), 2, "embedding table must be 2-d");
        let (vocab, dim) = (ts[0], ts[1]);
        let td = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let row = id as usize;
            assert!(row < vocab, "token id {row} outside vocab {vocab}");
            out.extend_from_slice(&td[row * dim..(row + 1) * dim]);
        }
        let rg = self.rg(table);
        let id = self.push(Tensor::new(vec![ids.len(), dim], out), rg);
        if rg {
            self.tape.push(Op::Embedding {
                table,
                ids: ids.to_vec(),
                out: id,
                dim,
            });
        }
        id
    }

    /// Normalizes each row of `x: (rows, cols)` to zero mean and unit
    /// variance (ε inside the square root), then applies the optional
    /// affine gain and bias.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: Option<NodeId>,
        bias: Option<NodeId>,
        eps: f64,
    ) -> NodeId {
        let (rows, cols) = self.nodes[x.0].tensor.as_2d();
        if let Some(g) = gain {
            assert_eq!(self.nodes[g.0].tensor.len(), cols, "gain length");
        }
        if let Some(b) = bias {
            assert_eq!(self.nodes[b.0].tensor.len(), cols, "bias length");
        }
        let eps = S::c(eps);
        let inv_cols = S::one() / S::c(cols as f64);
        let xd = self.data(x);
        let gd = gain.map(|g| self.data(g).to_vec());
        let bd = bias.map(|b| self.data(b).to_vec());

        let mut out = vec![S::zero(); rows * cols];
        let mut rstd_all = vec![S::zero(); rows];
        let mut normalized = vec![S::zero(); rows * cols];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            let mut mean = S::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_cols;
            let mut var = S::zero();
            for &v in row {
                let d = v - mean;
                var = var + d * d;
            }
            var = var * inv_cols;
            let rstd = (var + eps).sqrt().recip();
            rstd_all[r] = rstd;
            for c in 0..cols {
                let xhat = (row[c] - mean) * rstd;
                normalized[r * cols + c] = xhat;
                let mut y = xhat;
                if let Some(g) = &gd {
                    y = y * g[c];
                }
                if let Some(b) = &bd {
                    y = y + b[c];
                }
                out[r * cols + c] = y;
            }
        }
        let rg = self.rg(x)
            || gain.map(|g| self.rg(g)).unwrap_or(false)
            || bias.map(|b| self.rg(b)).unwrap_or(false);
        let shape = self.shape(x).to_vec();
        let id = self.push(Tensor::new(shape, out), rg);
        if rg {
            self.tape.push(Op::LayerNorm {
                x,
                gain,
                bias,
                out: id,
                rows,
                cols,
                rstd: rstd_all,
                normalized,
            });
        }
        id
    }

    /// Softmax along the last axis of `x: (rows, cols)`.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.nodes[x.0].tensor.as_2d();
        let xd = self.data(x);
        let mut out = vec![S::zero(); rows * cols];
        for r in 0..rows {
            softmax_row(&xd[r * cols..(r + 1) * cols], &mut out[r * cols..(r + 1) * cols]);
        }
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        let id = self.push(Tensor::new(shape, out), rg);
        if rg {
            self.tape.push(Op::Softmax {
                x,
                out: id,
                rows,
                cols,
            });
        }
        id
    }

    /// Multi-head scaled dot-product self-attention.
    ///
    /// `q`, `k`, `v` are `(batch * seq, d_model)` with `d_model` split into
    /// `heads` heads; scores are scaled by `1/sqrt(head_dim)`.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        batch: usize,
        seq: usize,
    ) -> NodeId {
        let (rows, d_model) = self.nodes[q.0].tensor.as_2d();
        assert_eq!(rows, batch * seq, "attention rows must equal batch*seq");
        assert_eq!(self.shape(k), self.shape(q), "q/k shapes differ");
        assert_eq!(self.shape(v), self.shape(q), "q/v shapes differ");
        assert_eq!(d_model % heads, 0, "d_model must divide into heads");
        let hd = d_model / heads;
        let scale = S::c(1.0 / (hd as f64).sqrt());

        let qd = self.data(q);
        let kd = self.data(k);
        let vd = self.data(v);
        let mut out = vec![S::zero(); rows * d_model];
        let mut probs = vec![S::zero(); batch * heads * seq * seq];
        let mut scores = vec![S::zero(); seq];
        for b in 0..batch {
            for h in 0..heads {
                let head_off = h * hd;
                for t1 in 0..seq {
                    let qrow = (b * seq + t1) * d_model + head_off;
                    for t2 in 0..seq {
                        let krow = (b * seq + t2) * d_model + head_off;
                        let mut dot = S::zero();
                        for d in 0..hd {
                            dot = qd[qrow + d].mul_add(kd[krow + d], dot);
                        }
                        scores[t2] = dot * scale;
                    }
                    let p_off = ((b * heads + h) * seq + t1) * seq;
                    softmax_row(&scores, &mut probs[p_off..p_off + seq]);
                    let orow = (b * seq + t1) * d_model + head_off;
                    for t2 in 0..seq {
                        let p = probs[p_off + t2];
                        let vrow = (b * seq + t2) * d_model + head_off;
                        for d in 0..hd {
                            out[orow + d] = p.mul_add(vd[vrow + d], out[orow + d]);
                        }
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        let id = self.push(Tensor::new(vec![rows, d_model], out), rg);
        if rg {
            self.tape.push(Op::Attention {
                q,
                k,
                v,
                out: id,
                batch,
                seq,
                heads,
                head_dim: hd,
                probs,
            });
        }
        id
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let data = self.data(x).iter().map(|&v| gelu_fwd(v)).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        let id = self.push(Tensor::new(shape, data), rg);
        if rg {
            self.tape.push(Op::Gelu { x, out: id });
        }
        id
    }

    /// `x · w (+ bias)`, the dense layer.
    pub fn linear(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> NodeId {
        let y = self.matmul(x, w);
        match bias {
            Some(b) => self.add_bias(y, b),
            None => y,
        }
    }

    /// Averages over the sequence axis: `(batch * seq, cols)` to
    /// `(batch, cols)`.
    pub fn mean_pool(&mut self, x: NodeId, batch: usize, seq: usize) -> NodeId {
        let (rows, cols) = self.nodes[x.0].tensor.as_2d();
        assert_eq!(rows, batch * seq, "mean_pool rows must equal batch*seq");
        let xd = self.data(x);
        let inv = S::one() / S::c(seq as f64);
        let mut out = vec![S::zero(); batch * cols];
        for b in 0..batch {
            for t in 0..seq {
                let row = (b * seq + t) * cols;
                for c in 0..cols {
                    out[b * cols + c] = out[b * cols + c] + xd[row + c];
                }
            }
            for c in 0..cols {
                out[b * cols + c] = out[b * cols + c] * inv;
            }
        }
        let rg = self.rg(x);
        let id = self.push(Tensor::new(vec![batch, cols], out), rg);
        if rg {
            self.tape.push(Op::MeanPool {
                x,
                out: id,
                batch,
                seq,
                cols,
            });
        }
        id
    }

    /// Takes the final sequence position of each example.
    pub fn last_token_pool(&mut self, x: NodeId, batch: usize, seq: usize) -> NodeId {
        let (rows, cols) = self.nodes[x.0].tensor.as_2d();
        assert_eq!(rows, batch * seq, "pool rows must equal batch*seq");
        let xd = self.data(x);
        let mut out = Vec::with_capacity(batch * cols);
        for b in 0..batch {
            let row = (b * seq + seq - 1) * cols;
            out.extend_from_slice(&xd[row..row + cols]);
        }
        let rg = self.rg(x);
        let id = self.push(Tensor::new(vec![batch, cols], out), rg);
        if rg {
            self.tape.push(Op::LastTokenPool {
                x,
                out: id,
                batch,
                seq,
                cols,
            });
        }
        id
    }

    /// Inverted dropout: keeps each element with probability `1 - rate` and
    /// rescales by `1/(1 - rate)`. Identity when `rate == 0`.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut ChaCha8Rng) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if rate == 0.0 {
            return x;
        }
        let keep = S::c(1.0 / (1.0 - rate));
        let mask: Vec<S> = self
            .data(x)
            .iter()
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .data(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        let id = self.push(Tensor::new(shape, data), rg);
        if rg {
            self.tape.push(Op::Dropout { x, out: id, mask });
        }
        id
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let mut total = S::zero();
        for &v in self.data(x) {
            total = total + v;
        }
        let rg = self.rg(x);
        let id = self.push(Tensor::scalar(total), rg);
        if rg {
            self.tape.push(Op::Sum { x, out: id });
        }
        id
    }

    /// Mean cross-entropy of `logits: (rows, cols)` against one class index
    /// per row.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32]) -> NodeId {
        let (rows, cols) = self.nodes[logits.0].tensor.as_2d();
        assert_eq!(targets.len(), rows, "one target per row");
        for &t in targets {
            assert!((t as usize) < cols, "target class {t} outside {cols} classes");
        }
        let ld = self.data(logits);
        let mut probs = vec![S::zero(); rows * cols];
        let mut loss = S::zero();
        for r in 0..rows {
            let row = &ld[r * cols..(r + 1) * cols];
            let mut max = row[0];
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            let mut sum = S::zero();
            for (c, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[r * cols + c] = e;
                sum = sum + e;
            }
            let inv = sum.recip();
            for c in 0..cols {
                probs[r * cols + c] = probs[r * cols + c] * inv;
            }
            loss = loss + sum.ln() - (row[targets[r] as usize] - max);
        }
        loss = loss / S::c(rows as f64);
        let rg = self.rg(logits);
        let id = self.push(Tensor::scalar(loss), rg);
        if rg {
            self.tape.push(Op::CrossEntropy {
                logits,
                out: id,
                targets: targets.to_vec(),
                probs,
                rows,
                cols,
            });
        }
        id
    }

    /// Mean squared error over all elements of two same-shape nodes.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        assert_eq!(self.shape(pred), self.shape(target), "mse shapes differ");
        let inv = S::one() / S::c(self.nodes[pred.0].tensor.len() as f64);
        let mut loss = S::zero();
        for (&p, &t) in self.data(pred).iter().zip(self.data(target)) {
            let d = p - t;
            loss = d.mul_add(d, loss);
        }
        loss = loss * inv;
        let rg = self.rg(pred) || self.rg(target);
        let id = self.push(Tensor::scalar(loss), rg);
        if rg {
            self.tape.push(Op::Mse {
                pred,
                target,
                out: id,
            });
        }
        id
    }

    /// Masked mean squared error against constant targets:
    /// `Σ mask (pred - target)^2 / Σ mask`. Elements with zero mask get
    /// exactly zero gradient.
    pub fn mse_masked(&mut self, pred: NodeId, target: &[S], mask: &[S]) -> NodeId {
        let len = self.nodes[pred.0].tensor.len();
        assert_eq!(target.len(), len, "target length");
        assert_eq!(mask.len(), len, "mask length");
        let mut mask_total = S::zero();
        for &m in mask {
            mask_total = mask_total + m;
        }
        assert!(mask_total > S::zero(), "mask must select something");
        let mut loss = S::zero();
        for i in 0..len {
            let d = self.data(pred)[i] - target[i];
            loss = (mask[i] * d).mul_add(d, loss);
        }
        loss = loss / mask_total;
        let rg = self.rg(pred);
        let id = self.push(Tensor::scalar(loss), rg);
        if rg {
            self.tape.push(Op::MseMasked {
                pred,
                out: id,
                target: target.to_vec(),
                mask: mask.to_vec(),
                mask_total,
            });
        }
        id
    }

    // ---- backward ----

    /// Backpropagates from a scalar loss node. Visits each tape entry once
    /// in reverse; gradients accumulate additively where a node fans out.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(
            self.nodes[loss.0].tensor.len(),
            1,
            "backward starts from a scalar"
        );
        for node in &mut self.nodes {
            node.grad = if node.requires_grad {
                Some(vec![S::zero(); node.tensor.len()])
            } else {
                None
            };
        }
        if let Some(g) = &mut self.nodes[loss.0].grad {
            g[0] = S::one();
        } else {
            return; // loss does not depend on anything differentiable
        }

        for i in (0..self.tape.len()).rev() {
            let op = std::mem::replace(&mut self.tape[i], Op::Noop);
            self.step_backward(&op);
            self.tape[i] = op;
        }
    }

    fn take_grad(&mut self, id: NodeId) -> Option<Vec<S>> {
        self.nodes[id.0].grad.take()
    }

    fn put_grad(&mut self, id: NodeId, grad: Vec<S>) {
        self.nodes[id.0].grad = Some(grad);
    }

    fn add_to_grad(&mut self, id: NodeId, update: impl FnOnce(&mut [S])) {
        if let Some(g) = &mut self.nodes[id.0].grad {
            update(g);
        }
    }

    fn step_backward(&mut self, op: &Op<S>) {
        match op {
            Op::Noop => {}
            Op::Matmul { a, b, out, m, k, n } => {
                let Some(go) = self.take_grad(*out) else { return };
                if self.rg(*a) {
                    // dA += dC · B^T
                    let bt = transpose(self.data(*b), *k, *n);
                    let mut da = self.take_grad(*a).unwrap();
                    mm_acc(&go, &bt, *m, *n, *k, &mut da);
                    self.put_grad(*a, da);
                }
                if self.rg(*b) {
                    // dB += A^T · dC
                    let at = transpose(self.data(*a), *m, *k);
                    let mut db = self.take_grad(*b).unwrap();
                    mm_acc(&at, &go, *k, *m, *n, &mut db);
                    self.put_grad(*b, db);
                }
                self.put_grad(*out, go);
            }
            Op::Add { a, b, out } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*a, |g| {
                    for (gi, &o) in g.iter_mut().zip(&go) {
                        *gi = *gi + o;
                    }
                });
                self.add_to_grad(*b, |g| {
                    for (gi, &o) in g.iter_mut().zip(&go) {
                        *gi = *gi + o;
                    }
                });
                self.put_grad(*out, go);
            }
            Op::AddBias {
                x,
                bias,
                out,
                rows,
                cols,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*x, |g| {
                    for (gi, &o) in g.iter_mut().zip(&go) {
                        *gi = *gi + o;
                    }
                });
                self.add_to_grad(*bias, |g| {
                    for r in 0..*rows {
                        for c in 0..*cols {
                            g[c] = g[c] + go[r * cols + c];
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Scale { x, out, factor } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*x, |g| {
                    for (gi, &o) in g.iter_mut().zip(&go) {
                        *gi = o.mul_add(*factor, *gi);
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Embedding {
                table,
                ids,
                out,
                dim,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*table, |g| {
                    for (row, &id) in ids.iter().enumerate() {
                        let t = id as usize * dim;
                        let o = row * dim;
                        for d in 0..*dim {
                            g[t + d] = g[t + d] + go[o + d];
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                out,
                rows,
                cols,
                rstd,
                normalized,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                let gd = gain.map(|g| self.data(g).to_vec());
                if let Some(g) = gain {
                    self.add_to_grad(*g, |gg| {
                        for r in 0..*rows {
                            for c in 0..*cols {
                                gg[c] = go[r * cols + c].mul_add(normalized[r * cols + c], gg[c]);
                            }
                        }
                    });
                }
                if let Some(b) = bias {
                    self.add_to_grad(*b, |gb| {
                        for r in 0..*rows {
                            for c in 0..*cols {
                                gb[c] = gb[c] + go[r * cols + c];
                            }
                        }
                    });
                }
                let inv_cols = S::one() / S::c(*cols as f64);
                self.add_to_grad(*x, |gx| {
                    for r in 0..*rows {
                        let off = r * cols;
                        let mut mean_dy = S::zero();
                        let mut mean_dy_xhat = S::zero();
                        for c in 0..*cols {
                            let mut dy = go[off + c];
                            if let Some(gd) = &gd {
                                dy = dy * gd[c];
                            }
                            mean_dy = mean_dy + dy;
                            mean_dy_xhat = dy.mul_add(normalized[off + c], mean_dy_xhat);
                        }
                        mean_dy = mean_dy * inv_cols;
                        mean_dy_xhat = mean_dy_xhat * inv_cols;
                        for c in 0..*cols {
                            let mut dy = go[off + c];
                            if let Some(gd) = &gd {
                                dy = dy * gd[c];
                            }
                            let term = dy - mean_dy - normalized[off + c] * mean_dy_xhat;
                            gx[off + c] = rstd[r].mul_add(term, gx[off + c]);
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Softmax {
                x,
                out,
                rows,
                cols,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                let p = self.data(*out).to_vec();
                self.add_to_grad(*x, |gx| {
                    for r in 0..*rows {
                        let off = r * cols;
                        let mut dot = S::zero();
                        for c in 0..*cols {
                            dot = go[off + c].mul_add(p[off + c], dot);
                        }
                        for c in 0..*cols {
                            gx[off + c] =
                                (p[off + c] * (go[off + c] - dot)) + gx[off + c];
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Attention {
                q,
                k,
                v,
                out,
                batch,
                seq,
                heads,
                head_dim,
                probs,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                let d_model = heads * head_dim;
                let qd = self.data(*q).to_vec();
                let kd = self.data(*k).to_vec();
                let vd = self.data(*v).to_vec();
                let scale = S::c(1.0 / (*head_dim as f64).sqrt());
                let seq_n = *seq;
                let hd = *head_dim;

                let mut dq = vec![S::zero(); qd.len()];
                let mut dk = vec![S::zero(); kd.len()];
                let mut dv = vec![S::zero(); vd.len()];
                let mut dp = vec![S::zero(); seq_n * seq_n];
                let mut ds = vec![S::zero(); seq_n * seq_n];
                for b in 0..*batch {
                    for h in 0..*heads {
                        let head_off = h * hd;
                        let p_base = ((b * heads + h) * seq_n) * seq_n;
                        // dP and dV
                        for t1 in 0..seq_n {
                            let orow = (b * seq_n + t1) * d_model + head_off;
                            for t2 in 0..seq_n {
                                let vrow = (b * seq_n + t2) * d_model + head_off;
                                let mut dot = S::zero();
                                for d in 0..hd {
                                    dot = go[orow + d].mul_add(vd[vrow + d], dot);
                                }
                                dp[t1 * seq_n + t2] = dot;
                                let p = probs[p_base + t1 * seq_n + t2];
                                for d in 0..hd {
                                    dv[vrow + d] = p.mul_add(go[orow + d], dv[vrow + d]);
                                }
                            }
                        }
                        // dS through the softmax
                        for t1 in 0..seq_n {
                            let mut dot = S::zero();
                            for t2 in 0..seq_n {
                                dot = dp[t1 * seq_n + t2]
                                    .mul_add(probs[p_base + t1 * seq_n + t2], dot);
                            }
                            for t2 in 0..seq_n {
                                let p = probs[p_base + t1 * seq_n + t2];
                                ds[t1 * seq_n + t2] = p * (dp[t1 * seq_n + t2] - dot) * scale;
                            }
                        }
                        // dQ and dK
                        for t1 in 0..seq_n {
                            let qrow = (b * seq_n + t1) * d_model + head_off;
                            for t2 in 0..seq_n {
                                let krow = (b * seq_n + t2) * d_model + head_off;
                                let s = ds[t1 * seq_n + t2];
                                for d in 0..hd {
                                    dq[qrow + d] = s.mul_add(kd[krow + d], dq[qrow + d]);
                                    dk[krow + d] = s.mul_add(qd[qrow + d], dk[krow + d]);
                                }
                            }
                        }
                    }
                }
                self.add_to_grad(*q, |g| {
                    for (gi, &d) in g.iter_mut().zip(&dq) {
                        *gi = *gi + d;
                    }
                });
                self.add_to_grad(*k, |g| {
                    for (gi, &d) in g.iter_mut().zip(&dk) {
                        *gi = *gi + d;
                    }
                });
                self.add_to_grad(*v, |g| {
                    for (gi, &d) in g.iter_mut().zip(&dv) {
                        *gi = *gi + d;
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Gelu { x, out } => {
                let Some(go) = self.take_grad(*out) else { return };
                let xd = self.data(*x).to_vec();
                self.add_to_grad(*x, |g| {
                    for i in 0..xd.len() {
                        g[i] = go[i].mul_add(gelu_bwd(xd[i]), g[i]);
                    }
                });
                self.put_grad(*out, go);
            }
            Op::MeanPool {
                x,
                out,
                batch,
                seq,
                cols,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                let inv = S::one() / S::c(*seq as f64);
                self.add_to_grad(*x, |g| {
                    for b in 0..*batch {
                        for t in 0..*seq {
                            let row = (b * seq + t) * cols;
                            for c in 0..*cols {
                                g[row + c] = go[b * cols + c].mul_add(inv, g[row + c]);
                            }
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::LastTokenPool {
                x,
                out,
                batch,
                seq,
                cols,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*x, |g| {
                    for b in 0..*batch {
                        let row = (b * seq + seq - 1) * cols;
                        for c in 0..*cols {
                            g[row + c] = g[row + c] + go[b * cols + c];
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Dropout { x, out, mask } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*x, |g| {
                    for i in 0..mask.len() {
                        g[i] = go[i].mul_add(mask[i], g[i]);
                    }
                });
                self.put_grad(*out, go);
            }
            Op::CrossEntropy {
                logits,
                out,
                targets,
                probs,
                rows,
                cols,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                let upstream = go[0] / S::c(*rows as f64);
                self.add_to_grad(*logits, |g| {
                    for r in 0..*rows {
                        let off = r * cols;
                        for c in 0..*cols {
                            let indicator = if c == targets[r] as usize {
                                S::one()
                            } else {
                                S::zero()
                            };
                            g[off + c] =
                                ((probs[off + c] - indicator) * upstream) + g[off + c];
                        }
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Mse { pred, target, out } => {
                let Some(go) = self.take_grad(*out) else { return };
                let len = self.nodes[pred.0].tensor.len();
                let factor = go[0] * S::c(2.0 / len as f64);
                let diff: Vec<S> = self
                    .data(*pred)
                    .iter()
                    .zip(self.data(*target))
                    .map(|(&p, &t)| p - t)
                    .collect();
                self.add_to_grad(*pred, |g| {
                    for (gi, &d) in g.iter_mut().zip(&diff) {
                        *gi = d.mul_add(factor, *gi);
                    }
                });
                self.add_to_grad(*target, |g| {
                    for (gi, &d) in g.iter_mut().zip(&diff) {
                        *gi = *gi - d * factor;
                    }
                });
                self.put_grad(*out, go);
            }
            Op::Sum { x, out } => {
                let Some(go) = self.take_grad(*out) else { return };
                self.add_to_grad(*x, |g| {
                    for gi in g.iter_mut() {
                        *gi = *gi + go[0];
                    }
                });
                self.put_grad(*out, go);
            }
            Op::MseMasked {
                pred,
                out,
                target,
                mask,
                mask_total,
            } => {
                let Some(go) = self.take_grad(*out) else { return };
                let factor = go[0] * S::c(2.0) / *mask_total;
                let pd = self.data(*pred).to_vec();
                self.add_to_grad(*pred, |g| {
                    for i in 0..pd.len() {
                        let d = mask[i] * (pd[i] - target[i]);
                        g[i] = d.mul_add(factor, g[i]);
                    }
                });
                self.put_grad(*out, go);
            }
        }
    }
}

fn softmax_row<S: Scalar>(row: &[S], out: &mut [S]) {
    let mut max = row[0];
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut sum = S::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum = sum + e;
    }
    let inv = sum.recip();
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

fn gelu_fwd<S: Scalar>(x: S) -> S {
    let c = S::c(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = S::c(0.044715);
    let u = c * (x + a * x * x * x);
    S::c(0.5) * x * (S::one() + u.tanh())
}

fn gelu_bwd<S: Scalar>(x: S) -> S {
    let c = S::c(0.797_884_560_802_865_4);
    let a = S::c(0.044715);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = S::one() - t * t;
    let du = c * (S::one() + S::c(3.0) * a * x * x);
    S::c(0.5) * (S::one() + t) + S::c(0.5) * x * sech2 * du
}

/// `out += A · B` with `A: (m, k)`, `B: (k, n)`, all row-major. The i-k-j
/// loop order keeps the inner loop a contiguous fused multiply-add over the
/// output row, with a fixed per-element reduction order (k ascending).
fn mm_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = av.mul_add(bv, *o);
            }
        }
    }
}

fn transpose<S: Scalar>(src: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}
