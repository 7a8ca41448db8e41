//! Reverse-mode automatic differentiation over a recorded operation list.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order and the backward sweep simply walks it in reverse.

use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{gemm, log_sum_exp, softmax_in_place, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Value substituted for masked logits before a softmax.
pub const MASK_FILL: f64 = -1e9;

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Tanh(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    SoftmaxRows(Var),
    MaskCols(Var, Vec<bool>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Row(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    AddAll(Vec<Var>),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    CrossEntropyRows {
        logits: Var,
        targets: Vec<usize>,
        keep: Vec<bool>,
        probs: Vec<f64>,
        count: usize,
    },
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
}

/// A computation recorded against a read-only parameter store.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Trainable parameter leaf. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    fn mat_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape {
                op,
                left: s.to_vec(),
                right: vec![],
            }),
        }
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul")?;
        let (k2, n) = self.mat_dims(b, "matmul")?;
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            &mut out,
            0.0,
        );
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul_nt")?;
        let (n, k2) = self.mat_dims(b, "matmul_nt")?;
        if k != k2 {
            return Err(self.shape_err("matmul_nt", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (1, k as isize),
            &mut out,
            0.0,
        );
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b)))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(self.shape_err(op, a, b));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if self.value(row).len() != c {
            return Err(self.shape_err("add_row", x, row));
        }
        let bias = self.value(row).data();
        let mut data = self.value(x).data().to_vec();
        for i in 0..r {
            for (v, b) in data[i * c..(i + 1) * c].iter_mut().zip(bias) {
                *v += b;
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * s).collect())
            .expect("shape preserved");
        self.push(out, Op::Scale(x, s))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_K * (v + GELU_C * v * v * v)).tanh()))
            .collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        self.push(out, Op::Gelu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v.tanh()).collect())
            .expect("shape preserved");
        self.push(out, Op::Tanh(x))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if self.value(gain).len() != c {
            return Err(self.shape_err("layer_norm", x, gain));
        }
        if self.value(bias).len() != c {
            return Err(self.shape_err("layer_norm", x, bias));
        }
        let (xd, g, b) = (self.value(x).data(), self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xd[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Softmax along the last dimension.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut data = t.data().to_vec();
        for i in 0..r {
            softmax_in_place(&mut data[i * c..(i + 1) * c]);
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Replaces columns with `keep[j] == false` by [`MASK_FILL`].
    pub fn mask_cols(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        if keep.len() != c {
            return Err(Error::Shape {
                op: "mask_cols",
                left: t.shape().to_vec(),
                right: vec![keep.len()],
            });
        }
        let mut data = t.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                if !keep[j] {
                    data[i * c + j] = MASK_FILL;
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(out, Op::MaskCols(x, keep.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.mat_dims(x, "slice_cols")?;
        if start + len > c || len == 0 {
            return Err(Error::Index { index: start + len, len: c });
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Tensor::matrix(r, len, data)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.mat_dims(parts[0], "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.mat_dims(p, "concat_cols")?;
            if r != rows {
                return Err(self.shape_err("concat_cols", parts[0], p));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec())))
    }

    /// Selects rows of an embedding table.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.mat_dims(table, "gather_rows")?;
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::Index { index: i, len: r });
            }
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let t = Tensor::matrix(indices.len(), c, data)?;
        Ok(self.push(
            t,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let (r, _) = self.mat_dims(x, "row")?;
        if i >= r {
            return Err(Error::Index { index: i, len: r });
        }
        let t = Tensor::vector(self.value(x).row(i).to_vec())?;
        Ok(self.push(t, Op::Row(x, i)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("add_all of nothing".into()));
        }
        let shape = self.shape(parts[0]).to_vec();
        let mut acc = vec![0.0; self.value(parts[0]).len()];
        for &p in parts {
            if self.shape(p) != shape.as_slice() {
                return Err(self.shape_err("add_all", parts[0], p));
            }
            for (a, v) in acc.iter_mut().zip(self.value(p).data()) {
                *a += v;
            }
        }
        Ok(self.push(Tensor::new(shape, acc)?, Op::AddAll(parts.to_vec())))
    }

    /// `-log softmax(logits)[target]` over a flat logit vector.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if target >= t.len() {
            return Err(Error::Index {
                index: target,
                len: t.len(),
            });
        }
        let lse = log_sum_exp(t.data());
        let loss = lse - t.data()[target];
        let probs = t.data().iter().map(|v| (v - lse).exp()).collect();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
        ))
    }

    /// Mean per-row cross entropy over rows with `keep[i]`. An all-masked
    /// input yields a zero loss.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize], keep: &[bool]) -> Result<Var> {
        let (r, c) = self.mat_dims(logits, "cross_entropy_rows")?;
        if targets.len() != r || keep.len() != r {
            return Err(Error::Shape {
                op: "cross_entropy_rows",
                left: vec![r, c],
                right: vec![targets.len(), keep.len()],
            });
        }
        let data = self.value(logits).data();
        let mut probs = vec![0.0; r * c];
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..r {
            if !keep[i] {
                continue;
            }
            if targets[i] >= c {
                return Err(Error::Index {
                    index: targets[i],
                    len: c,
                });
            }
            let row = &data[i * c..(i + 1) * c];
            let lse = log_sum_exp(row);
            total += lse - row[targets[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropyRows {
                logits,
                targets: targets.to_vec(),
                keep: keep.to_vec(),
                probs,
                count,
            },
        ))
    }

    /// Gradients of a scalar node with respect to every parameter in the
    /// store; parameters the loss does not reach get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(self.store);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2();
                    let n = self.value(*b).dims2().1;
                    let mut da = vec![0.0; m * k];
                    // dA = dC · Bᵀ
                    gemm(m, n, k, &g, (n as isize, 1), self.value(*b).data(), (1, n as isize), &mut da, 0.0);
                    let mut db = vec![0.0; k * n];
                    // dB = Aᵀ · dC
                    gemm(k, m, n, self.value(*a).data(), (1, k as isize), &g, (n as isize, 1), &mut db, 0.0);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    let (m, k) = self.value(*a).dims2();
                    let n = self.value(*b).dims2().0;
                    let mut da = vec![0.0; m * k];
                    // dA = dC · B
                    gemm(m, n, k, &g, (n as isize, 1), self.value(*b).data(), (k as isize, 1), &mut da, 0.0);
                    let mut db = vec![0.0; n * k];
                    // dB = dCᵀ · A
                    gemm(n, m, k, &g, (1, n as isize), self.value(*a).data(), (k as isize, 1), &mut db, 0.0);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(x, row) => {
                    let c = self.value(*row).len();
                    let mut db = vec![0.0; c];
                    for chunk in g.chunks(c) {
                        for (d, v) in db.iter_mut().zip(chunk) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *row, db);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let da = g.iter().zip(vb).map(|(g, y)| g * y).collect();
                    let db = g.iter().zip(va).map(|(g, x)| g * x).collect();
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(x, s) => acc(&mut grads, *x, g.iter().map(|v| v * s).collect()),
                Op::Gelu(x) => {
                    let dx = g
                        .iter()
                        .zip(self.value(*x).data())
                        .map(|(g, &v)| {
                            let u = GELU_K * (v + GELU_C * v * v * v);
                            let t = u.tanh();
                            let du = GELU_K * (1.0 + 3.0 * GELU_C * v * v);
                            g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                        })
                        .collect();
                    acc(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let y = self.value(Var(idx)).data();
                    acc(&mut grads, *x, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gain).data();
                    let c = gv.len();
                    let r = rstd.len();
                    let mut dx = vec![0.0; r * c];
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        let gr = &g[i * c..(i + 1) * c];
                        let hr = &xhat[i * c..(i + 1) * c];
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for j in 0..c {
                            let d = gr[j] * gv[j];
                            mean_d += d;
                            mean_dh += d * hr[j];
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                        }
                        mean_d /= c as f64;
                        mean_dh /= c as f64;
                        for j in 0..c {
                            let d = gr[j] * gv[j];
                            dx[i * c + j] = rstd[i] * (d - mean_d - hr[j] * mean_dh);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gain, dg);
                    acc(&mut grads, *bias, db);
                }
                Op::SoftmaxRows(x) => {
                    let y = self.value(Var(idx));
                    let (r, c) = y.dims2();
                    let yd = y.data();
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        let yr = &yd[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dx[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::MaskCols(x, keep) => {
                    let c = keep.len();
                    let mut dx = g;
                    for (j, v) in dx.iter_mut().enumerate() {
                        if !keep[j % c] {
                            *v = 0.0;
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let (r, c) = self.value(*x).dims2();
                    let len = g.len() / r;
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        dx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).dims2().1).collect();
                    let total: usize = widths.iter().sum();
                    let rows = g.len() / total;
                    let mut offset = 0;
                    for (&p, &w) in parts.iter().zip(&widths) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            dp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        acc(&mut grads, p, dp);
                        offset += w;
                    }
                }
                Op::Gather { table, indices } => {
                    let t = self.value(*table);
                    let c = t.dims2().1;
                    let mut dt = vec![0.0; t.len()];
                    for (k, &i) in indices.iter().enumerate() {
                        for j in 0..c {
                            dt[i * c + j] += g[k * c + j];
                        }
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::Row(x, i) => {
                    let t = self.value(*x);
                    let c = t.dims2().1;
                    let mut dx = vec![0.0; t.len()];
                    dx[i * c..(i + 1) * c].copy_from_slice(&g);
                    acc(&mut grads, *x, dx);
                }
                Op::Reshape(x) => acc(&mut grads, *x, g),
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(&mut grads, *x, vec![g[0]; n]);
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    acc(&mut grads, *x, vec![g[0] / n as f64; n]);
                }
                Op::AddAll(parts) => {
                    for &p in parts {
                        acc(&mut grads, p, g.clone());
                    }
                }
                Op::CrossEntropy { logits, target, probs } => {
                    let mut dx: Vec<f64> = probs.iter().map(|p| g[0] * p).collect();
                    dx[*target] -= g[0];
                    acc(&mut grads, *logits, dx);
                }
                Op::CrossEntropyRows {
                    logits,
                    targets,
                    keep,
                    probs,
                    count,
                } => {
                    if *count == 0 {
                        continue;
                    }
                    let c = probs.len() / targets.len();
                    let scale = g[0] / *count as f64;
                    let mut dx = vec![0.0; probs.len()];
                    for (i, &t) in targets.iter().enumerate() {
                        if !keep[i] {
                            continue;
                        }
                        for j in 0..c {
                            dx[i * c + j] = scale * probs[i * c + j];
                        }
                        dx[i * c + t] -= scale;
                    }
                    acc(&mut grads, *logits, dx);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(&g) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
