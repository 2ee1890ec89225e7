//! Reverse-mode differentiation over a per-forward tape.
//!
//! A [`Graph`] owns the nodes of one forward pass; [`Graph::backward`]
//! consumes the graph, walks the tape in reverse, and accumulates parameter
//! gradients into a [`GradStore`] aligned with a [`ParamSet`]. The graph is
//! rooted at a scalar loss and supports first-order gradients only.

use crate::error::{Error, Result};
use crate::tensor::{self, real, Real, Tensor};

/// Stable handle to one named parameter tensor in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of learnable tensors. The insertion order is
/// the canonical order used by optimizer state and checkpoint payloads.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient buffers aligned one-to-one with a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct GradStore<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Real> GradStore<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        GradStore {
            grads: params
                .entries
                .iter()
                .map(|(_, t)| vec![T::zero(); t.len()])
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v = T::zero();
            }
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    fn accumulate(&mut self, id: ParamId, delta: &[T]) {
        let buf = &mut self.grads[id.0];
        debug_assert_eq!(buf.len(), delta.len());
        for (b, &d) in buf.iter_mut().zip(delta) {
            *b += d;
        }
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.grads.iter_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<T>> {
        self.grads.iter()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        c: T,
    },
    Relu {
        a: usize,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    /// `a · bᵀ`
    MatMulNT {
        a: usize,
        b: usize,
    },
    AddBias {
        x: usize,
        bias: usize,
    },
    Embedding {
        table: usize,
        ids: Vec<u32>,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    SliceCols {
        x: usize,
        start: usize,
    },
    ConcatCols {
        parts: Vec<usize>,
        widths: Vec<usize>,
    },
    /// Value of the node is the softmax output; the backward pass only needs
    /// that output (masked columns are zero and stay zero).
    SoftmaxRows {
        x: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout {
        x: usize,
        mask: Vec<T>,
    },
    SumAll {
        x: usize,
    },
    MaskedCrossEntropy {
        logits: usize,
        labels: Vec<i32>,
        /// Softmax of the supervised rows, zero rows elsewhere.
        probs: Vec<T>,
        n_supervised: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
    param: Option<ParamId>,
}

/// One forward pass worth of tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    track: bool,
}

impl<T: Real> Graph<T> {
    /// `track = false` builds an inference-only graph: parameters enter as
    /// plain constants and [`Graph::backward`] has nothing to do.
    pub fn new(track: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            track,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false, None)
    }

    /// Parameter leaf. Tracked only when the graph tracks gradients.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        let value = params.get(id).clone();
        self.push(value, Op::Leaf, self.track, Some(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::add(self.value(a), self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Add { a: a.0, b: b.0 }, tracked, None))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Mul { a: a.0, b: b.0 }, tracked, None))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = tensor::scale(self.value(a), c);
        let tracked = self.tracked(a);
        self.push(value, Op::Scale { a: a.0, c }, tracked, None)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = tensor::relu(self.value(a));
        let tracked = self.tracked(a);
        self.push(value, Op::Relu { a: a.0 }, tracked, None)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul { a: a.0, b: b.0 }, tracked, None))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul_nt(self.value(a), self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMulNT { a: a.0, b: b.0 }, tracked, None))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = tensor::add_bias(self.value(x), self.value(bias))?;
        let tracked = self.tracked(x) || self.tracked(bias);
        Ok(self.push(
            value,
            Op::AddBias {
                x: x.0,
                bias: bias.0,
            },
            tracked,
            None,
        ))
    }

    /// `x·W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let prod = self.matmul(x, w)?;
        self.add_bias(prod, b)
    }

    /// Gathers the given rows of a 2-D node; gradients scatter-add back.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let ids: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
        self.embedding(x, &ids)
    }

    /// Row gather: output row `i` is `table[ids[i]]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= rows {
                return Err(Error::UnknownTokenId {
                    id: id as u32,
                    size: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(vec![ids.len(), d], data)?;
        let tracked = self.tracked(table);
        Ok(self.push(
            value,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            tracked,
            None,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (n, m) = (t.rows(), t.cols());
        if start + len > n {
            return Err(Error::InvalidArgument {
                name: "slice_rows",
                msg: format!("rows {start}..{} out of 0..{n}", start + len),
            });
        }
        let data = t.data()[start * m..(start + len) * m].to_vec();
        let value = Tensor::new(vec![len, m], data)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::SliceRows { x: x.0, start }, tracked, None))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (n, m) = (t.rows(), t.cols());
        if start + len > m {
            return Err(Error::InvalidArgument {
                name: "slice_cols",
                msg: format!("cols {start}..{} out of 0..{m}", start + len),
            });
        }
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            let row = t.row(i);
            data.extend_from_slice(&row[start..start + len]);
        }
        let value = Tensor::new(vec![n, len], data)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::SliceCols { x: x.0, start }, tracked, None))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument {
                name: "concat_cols",
                msg: "no parts".into(),
            });
        }
        let n = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                let t = self.value(p);
                if t.rows() != n {
                    return Err(Error::ShapeMismatch {
                        op: "concat_cols",
                        lhs: vec![n],
                        rhs: vec![t.rows()],
                    });
                }
                data.extend_from_slice(t.row(i));
            }
        }
        let value = Tensor::new(vec![n, total], data)?;
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(
            value,
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.0).collect(),
                widths,
            },
            tracked,
            None,
        ))
    }

    pub fn softmax_rows(&mut self, x: Var, col_mask: Option<&[u8]>) -> Result<Var> {
        let value = tensor::softmax_rows(self.value(x), col_mask)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::SoftmaxRows { x: x.0 }, tracked, None))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (value, xhat, inv_std) =
            tensor::layer_norm_cached(self.value(x), self.value(gain), self.value(bias), eps)?;
        let tracked = self.tracked(x) || self.tracked(gain) || self.tracked(bias);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                inv_std,
            },
            tracked,
            None,
        ))
    }

    pub fn dropout(&mut self, x: Var, p: f64, training: bool, seed: u64) -> Result<Var> {
        let (value, mask) = tensor::dropout_mask(self.value(x), p, training, seed)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Dropout { x: x.0, mask }, tracked, None))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::SumAll { x: x.0 }, tracked, None)
    }

    /// Mean over supervised positions of `-log softmax(logits)[label]`.
    /// Labels `< 0` are IGNORE and contribute neither loss nor gradient.
    /// Returns the scalar loss node and the supervised-position count.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: &[i32]) -> Result<(Var, usize)> {
        let t = self.value(logits);
        let (n, m) = (t.rows(), t.cols());
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                op: "masked_cross_entropy",
                lhs: vec![n, m],
                rhs: vec![labels.len()],
            });
        }
        let mut probs = vec![T::zero(); n * m];
        let mut n_sup = 0usize;
        let mut total = T::zero();
        for i in 0..n {
            let label = labels[i];
            if label < 0 {
                continue;
            }
            let label = label as usize;
            if label >= m {
                return Err(Error::UnknownTokenId {
                    id: label as u32,
                    size: m,
                });
            }
            n_sup += 1;
            let row = t.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * m + j] = e;
                sum += e;
            }
            for j in 0..m {
                probs[i * m + j] /= sum;
            }
            // -log p[label] = log(sum) - (x[label] - max)
            total += sum.ln() - (row[label] - max);
        }
        if n_sup == 0 {
            return Err(Error::NoSupervisedPositions);
        }
        let loss = total / real::<T>(n_sup as f64);
        let tracked = self.tracked(logits);
        let var = self.push(
            Tensor::scalar(loss),
            Op::MaskedCrossEntropy {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
                n_supervised: n_sup,
            },
            tracked,
            None,
        );
        Ok((var, n_sup))
    }

    /// Reverse pass from a scalar `loss`; parameter gradients are added into
    /// `store`. Consumes the graph (one backward per forward).
    pub fn backward(self, loss: Var, store: &mut GradStore<T>) -> Result<()> {
        self.backward_scaled(loss, T::one(), store)
    }

    /// [`Graph::backward`] with a scaled seed gradient, used to weight one
    /// example's contribution inside an accumulated minibatch.
    pub fn backward_scaled(self, loss: Var, seed: T, store: &mut GradStore<T>) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: self.value(loss).shape().to_vec(),
            });
        }
        let n_nodes = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n_nodes).map(|_| None).collect();
        grads[loss.0] = Some(vec![seed]);

        let nodes = self.nodes;
        // Helper: accumulate `delta` into the grad buffer of node `idx`.
        fn acc<T: Real>(
            grads: &mut [Option<Vec<T>>],
            nodes: &[Node<T>],
            idx: usize,
            write: impl FnOnce(&mut [T]),
        ) {
            if !nodes[idx].tracked {
                return;
            }
            let buf = grads[idx].get_or_insert_with(|| vec![T::zero(); nodes[idx].value.len()]);
            write(buf);
        }

        for idx in (0..n_nodes).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !nodes[idx].tracked {
                continue;
            }
            if let Some(pid) = nodes[idx].param {
                store.accumulate(pid, &g);
            }
            match &nodes[idx].op {
                Op::Leaf => {}
                Op::Add { a, b } => {
                    acc(&mut grads, &nodes, *a, |buf| {
                        for (o, &d) in buf.iter_mut().zip(&g) {
                            *o += d;
                        }
                    });
                    acc(&mut grads, &nodes, *b, |buf| {
                        for (o, &d) in buf.iter_mut().zip(&g) {
                            *o += d;
                        }
                    });
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    acc(&mut grads, &nodes, *a, |buf| {
                        for ((o, &d), &y) in buf.iter_mut().zip(&g).zip(bv.data()) {
                            *o += d * y;
                        }
                    });
                    acc(&mut grads, &nodes, *b, |buf| {
                        for ((o, &d), &x) in buf.iter_mut().zip(&g).zip(av.data()) {
                            *o += d * x;
                        }
                    });
                }
                Op::Scale { a, c } => {
                    let c = *c;
                    acc(&mut grads, &nodes, *a, |buf| {
                        for (o, &d) in buf.iter_mut().zip(&g) {
                            *o += d * c;
                        }
                    });
                }
                Op::Relu { a } => {
                    let av = &nodes[*a].value;
                    acc(&mut grads, &nodes, *a, |buf| {
                        for ((o, &d), &x) in buf.iter_mut().zip(&g).zip(av.data()) {
                            if x > T::zero() {
                                *o += d;
                            }
                        }
                    });
                }
                Op::MatMul { a, b } => {
                    // y = a·b: da = g·bᵀ, db = aᵀ·g
                    let g_t = Tensor::new(nodes[idx].value.shape().to_vec(), g.clone())?;
                    if nodes[*a].tracked {
                        let da = tensor::matmul_nt(&g_t, &nodes[*b].value)?;
                        acc(&mut grads, &nodes, *a, |buf| {
                            for (o, &d) in buf.iter_mut().zip(da.data()) {
                                *o += d;
                            }
                        });
                    }
                    if nodes[*b].tracked {
                        let db = tensor::matmul_tn(&nodes[*a].value, &g_t)?;
                        acc(&mut grads, &nodes, *b, |buf| {
                            for (o, &d) in buf.iter_mut().zip(db.data()) {
                                *o += d;
                            }
                        });
                    }
                }
                Op::MatMulNT { a, b } => {
                    // y = a·bᵀ: da = g·b, db = gᵀ·a
                    let g_t = Tensor::new(nodes[idx].value.shape().to_vec(), g.clone())?;
                    if nodes[*a].tracked {
                        let da = tensor::matmul(&g_t, &nodes[*b].value)?;
                        acc(&mut grads, &nodes, *a, |buf| {
                            for (o, &d) in buf.iter_mut().zip(da.data()) {
                                *o += d;
                            }
                        });
                    }
                    if nodes[*b].tracked {
                        let db = tensor::matmul_tn(&g_t, &nodes[*a].value)?;
                        acc(&mut grads, &nodes, *b, |buf| {
                            for (o, &d) in buf.iter_mut().zip(db.data()) {
                                *o += d;
                            }
                        });
                    }
                }
                Op::AddBias { x, bias } => {
                    let m = nodes[*bias].value.len();
                    acc(&mut grads, &nodes, *x, |buf| {
                        for (o, &d) in buf.iter_mut().zip(&g) {
                            *o += d;
                        }
                    });
                    acc(&mut grads, &nodes, *bias, |buf| {
                        for (k, &d) in g.iter().enumerate() {
                            buf[k % m] += d;
                        }
                    });
                }
                Op::Embedding { table, ids } => {
                    let d = nodes[*table].value.cols();
                    acc(&mut grads, &nodes, *table, |buf| {
                        for (i, &id) in ids.iter().enumerate() {
                            let dst = &mut buf[id as usize * d..(id as usize + 1) * d];
                            let src = &g[i * d..(i + 1) * d];
                            for (o, &v) in dst.iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    });
                }
                Op::SliceRows { x, start } => {
                    let m = nodes[*x].value.cols();
                    acc(&mut grads, &nodes, *x, |buf| {
                        let dst = &mut buf[start * m..start * m + g.len()];
                        for (o, &d) in dst.iter_mut().zip(&g) {
                            *o += d;
                        }
                    });
                }
                Op::SliceCols { x, start } => {
                    let m = nodes[*x].value.cols();
                    let w = nodes[idx].value.cols();
                    let n = nodes[idx].value.rows();
                    acc(&mut grads, &nodes, *x, |buf| {
                        for i in 0..n {
                            for j in 0..w {
                                buf[i * m + start + j] += g[i * w + j];
                            }
                        }
                    });
                }
                Op::ConcatCols { parts, widths } => {
                    let n = nodes[idx].value.rows();
                    let total = nodes[idx].value.cols();
                    let mut offset = 0usize;
                    for (&p, &w) in parts.iter().zip(widths) {
                        let off = offset;
                        acc(&mut grads, &nodes, p, |buf| {
                            for i in 0..n {
                                for j in 0..w {
                                    buf[i * w + j] += g[i * total + off + j];
                                }
                            }
                        });
                        offset += w;
                    }
                }
                Op::SoftmaxRows { x } => {
                    // dx_j = y_j (g_j - Σ_k g_k y_k); masked columns have
                    // y_j = 0 and therefore zero gradient.
                    let y = &nodes[idx].value;
                    let (n, m) = (y.rows(), y.cols());
                    acc(&mut grads, &nodes, *x, |buf| {
                        for i in 0..n {
                            let yr = y.row(i);
                            let gr = &g[i * m..(i + 1) * m];
                            let mut dot = T::zero();
                            for (&gv, &yv) in gr.iter().zip(yr) {
                                dot += gv * yv;
                            }
                            let out = &mut buf[i * m..(i + 1) * m];
                            for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                                *o += yv * (gv - dot);
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let d = nodes[*gain].value.len();
                    let n = nodes[idx].value.rows();
                    let gain_v = nodes[*gain].value.data().to_vec();
                    acc(&mut grads, &nodes, *bias, |buf| {
                        for i in 0..n {
                            for j in 0..d {
                                buf[j] += g[i * d + j];
                            }
                        }
                    });
                    acc(&mut grads, &nodes, *gain, |buf| {
                        for i in 0..n {
                            for j in 0..d {
                                buf[j] += g[i * d + j] * xhat[i * d + j];
                            }
                        }
                    });
                    acc(&mut grads, &nodes, *x, |buf| {
                        let inv_d = real::<T>(1.0 / d as f64);
                        for i in 0..n {
                            let mut mean_dxhat = T::zero();
                            let mut mean_dxhat_xhat = T::zero();
                            for j in 0..d {
                                let dxh = g[i * d + j] * gain_v[j];
                                mean_dxhat += dxh;
                                mean_dxhat_xhat += dxh * xhat[i * d + j];
                            }
                            mean_dxhat *= inv_d;
                            mean_dxhat_xhat *= inv_d;
                            for j in 0..d {
                                let dxh = g[i * d + j] * gain_v[j];
                                buf[i * d + j] += inv_std[i]
                                    * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
                            }
                        }
                    });
                }
                Op::Dropout { x, mask } => {
                    acc(&mut grads, &nodes, *x, |buf| {
                        for ((o, &d), &m) in buf.iter_mut().zip(&g).zip(mask) {
                            *o += d * m;
                        }
                    });
                }
                Op::SumAll { x } => {
                    let d = g[0];
                    acc(&mut grads, &nodes, *x, |buf| {
                        for o in buf.iter_mut() {
                            *o += d;
                        }
                    });
                }
                Op::MaskedCrossEntropy {
                    logits,
                    labels,
                    probs,
                    n_supervised,
                } => {
                    let m = nodes[*logits].value.cols();
                    let scale = g[0] / real::<T>(*n_supervised as f64);
                    acc(&mut grads, &nodes, *logits, |buf| {
                        for (i, &label) in labels.iter().enumerate() {
                            if label < 0 {
                                continue;
                            }
                            let row = &probs[i * m..(i + 1) * m];
                            let out = &mut buf[i * m..(i + 1) * m];
                            for (j, (o, &p)) in out.iter_mut().zip(row).enumerate() {
                                let onehot = if j == label as usize {
                                    T::one()
                                } else {
                                    T::zero()
                                };
                                *o += scale * (p - onehot);
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-parameter outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    /// `max|analytic - numeric|` over the tensor, divided by the larger of
    /// the two gradient ∞-norms. Zero for unresolvable tensors.
    pub rel_err: f64,
    pub max_abs_diff: f64,
    /// False when both gradients sit below the roundoff resolution of the
    /// central difference, i.e. the check can only certify "zero within
    /// measurement noise". True gradients that are architecturally zero
    /// (such as key biases, which cancel under the row softmax) land here.
    pub resolvable: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    /// Max over resolvable tensors.
    pub max_rel_err: f64,
    /// Smallest gradient magnitude the difference quotient can distinguish
    /// from rounding noise.
    pub noise_floor: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Central finite differences against analytic gradients.
///
/// `loss_fn` must be a deterministic function of the parameters. For each
/// scalar parameter the loss is re-evaluated at `θ ± h` and the derivative
/// estimate `(L₊ - L₋) / 2h` is compared with `analytic`. Errors are
/// normalized per tensor by the larger gradient ∞-norm; tensors whose
/// gradients fall below the difference quotient's roundoff resolution on
/// both sides are reported as agreeing at zero.
pub fn grad_check<T: Real>(
    params: &mut ParamSet<T>,
    analytic: &GradStore<T>,
    h: f64,
    mut loss_fn: impl FnMut(&ParamSet<T>) -> Result<T>,
) -> Result<GradCheckReport> {
    let eps = T::epsilon().to_f64().unwrap();
    let base_loss = loss_fn(params)?.to_f64().unwrap().abs().max(1.0);
    // |(L₊ - L₋)/2h| cannot resolve derivatives below ~ε|L|/h; keep a
    // generous safety factor over that bound.
    let noise_floor = 50.0 * eps * base_loss / (2.0 * h);
    let mut entries = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;
    let step = real::<T>(h);
    for id in params.ids().collect::<Vec<_>>() {
        let len = params.get(id).len();
        let mut max_diff = 0.0f64;
        let mut norm_a = 0.0f64;
        let mut norm_n = 0.0f64;
        for k in 0..len {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + step;
            let up = loss_fn(params)?.to_f64().unwrap();
            params.get_mut(id).data_mut()[k] = orig - step;
            let down = loss_fn(params)?.to_f64().unwrap();
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic_v = analytic.get(id)[k].to_f64().unwrap();
            max_diff = max_diff.max((analytic_v - numeric).abs());
            norm_a = norm_a.max(analytic_v.abs());
            norm_n = norm_n.max(numeric.abs());
        }
        let resolvable = norm_a.max(norm_n) > noise_floor;
        let rel = if resolvable {
            max_diff / norm_a.max(norm_n)
        } else {
            0.0
        };
        max_rel = max_rel.max(rel);
        entries.push(GradCheckEntry {
            name: params.name(id).to_string(),
            rel_err: rel,
            max_abs_diff: max_diff,
            resolvable,
        });
    }
    Ok(GradCheckReport {
        entries,
        max_rel_err: max_rel,
        noise_floor,
    })
}
