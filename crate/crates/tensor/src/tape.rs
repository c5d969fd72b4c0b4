//! Reverse-mode tape.
//!
//! Every forward op appends a node holding its output value and whatever the
//! backward pass needs. Node ids grow monotonically, so the node list is a
//! topological order by construction and `backward` is one reverse sweep.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{shape_err, Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::{matmul_raw, transpose_raw, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    LnFloor(Var, f64),
    Sum(Var),
    Mean(Var),
    MaskedSoftmax(Var, Vec<bool>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Select(Var, usize),
    Reshape(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        Ok(self.push(value, op))
    }

    /// Records a value that receives no gradient bookkeeping by name.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a named trainable leaf.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Leaf);
        self.params.push((name.to_owned(), v));
        v
    }

    pub fn bind(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let t = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_owned()))?;
        Ok(self.param(name, t))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        if k != k2 {
            return shape_err(
                "matmul",
                format!("{:?} x {:?}", self.value(a).shape(), self.value(b).shape()),
            );
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push_checked("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2();
        let out = transpose_raw(self.value(a).data(), r, c);
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(a)))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return shape_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push_checked("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        self.push_checked("sub", out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.push_checked("mul", out, Op::Mul(a, b))
    }

    /// Sums any number of same-shaped values.
    pub fn add_many(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| TensorError::Degenerate {
                op: "add_many",
                detail: "no operands".into(),
            })?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Adds a row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if self.value(row).numel() != c {
            return shape_err(
                "add_row",
                format!("{:?} + row {:?}", self.value(x).shape(), self.value(row).shape()),
            );
        }
        let b = self.value(row).data();
        let mut out = self.value(x).to_vec();
        for i in 0..r {
            for (o, bv) in out[i * c..(i + 1) * c].iter_mut().zip(b) {
                *o += bv;
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push_checked("add_row", Tensor::from_parts(shape, out), Op::AddRow(x, row))
    }

    /// `x W + b` for a matrix or row vector `x`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }

    /// Elementwise product with a constant of the same size (masks, dropout).
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        if c.numel() != self.value(x).numel() {
            return shape_err(
                "mul_const",
                format!("{:?} vs {:?}", self.value(x).shape(), c.shape()),
            );
        }
        let data = self.value(x).data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
        let shape = self.value(x).shape().to_vec();
        self.push_checked("mul_const", Tensor::from_parts(shape, data), Op::MulConst(x, c))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * k);
        self.push_checked("scale", out, Op::Scale(x, k))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        Ok(self.push(out, Op::Relu(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        Ok(self.push(out, Op::Sigmoid(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::tanh);
        Ok(self.push(out, Op::Tanh(x)))
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(softplus);
        self.push_checked("softplus", out, Op::Softplus(x))
    }

    /// `ln(max(x, floor))`; the floored entries pass no gradient.
    pub fn ln_floor(&mut self, x: Var, floor: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(floor).ln());
        self.push_checked("ln_floor", out, Op::LnFloor(x, floor))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push_checked("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let m = t.sum() / t.numel() as f64;
        self.push_checked("mean", Tensor::scalar(m), Op::Mean(x))
    }

    /// Softmax over the last axis with masked entries forced to exactly zero.
    ///
    /// `mask` is either one flag per element or one flag per column, in which
    /// case it applies to every row. `true` marks a valid entry. A row with no
    /// valid entry is rejected.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let full: Vec<bool> = if mask.len() == t.numel() {
            mask.to_vec()
        } else if mask.len() == c {
            mask.iter().copied().cycle().take(r * c).collect()
        } else {
            return shape_err(
                "masked_softmax",
                format!("mask of {} for {:?}", mask.len(), t.shape()),
            );
        };
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let xs = &t.data()[i * c..(i + 1) * c];
            let ms = &full[i * c..(i + 1) * c];
            let max = xs
                .iter()
                .zip(ms)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::Degenerate {
                    op: "masked_softmax",
                    detail: format!("row {i} has no valid entries"),
                });
            }
            let row = &mut out[i * c..(i + 1) * c];
            let mut z = 0.0;
            for j in 0..c {
                if ms[j] {
                    row[j] = (xs[j] - max).exp();
                    z += row[j];
                }
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let shape = t.shape().to_vec();
        self.push_checked(
            "masked_softmax",
            Tensor::from_parts(shape, out),
            Op::MaskedSoftmax(x, full),
        )
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let c = self.value(x).cols();
        self.masked_softmax(x, &vec![true; c])
    }

    /// Horizontal concatenation. Vectors stay vectors.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat_cols", "no operands");
        }
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return shape_err("concat_cols", "row counts differ");
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let shape = if parts.iter().all(|&p| self.value(p).rank() == 1) {
            vec![total]
        } else {
            vec![rows, total]
        };
        Ok(self.push(Tensor::from_parts(shape, out), Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat_rows", "no operands");
        }
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return shape_err("concat_rows", "column counts differ");
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / cols;
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::ConcatRows(parts.to_vec()),
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if len == 0 || start + len > c {
            return shape_err("slice_cols", format!("[{start}, {}) of {c}", start + len));
        }
        let t = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        Ok(self.push(Tensor::from_parts(vec![r, len], out), Op::SliceCols(x, start)))
    }

    /// Gathers rows by index; repeated indices broadcast a row.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if idx.is_empty() || idx.iter().any(|&i| i >= r) {
            return shape_err("gather_rows", format!("indices {idx:?} for {r} rows"));
        }
        let t = self.value(x);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        Ok(self.push(
            Tensor::from_parts(vec![idx.len(), c], out),
            Op::GatherRows(x, idx.to_vec()),
        ))
    }

    /// Row lookup into an embedding table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    /// Picks one element (flat row-major index) as a scalar.
    pub fn select(&mut self, x: Var, flat: usize) -> Result<Var> {
        let t = self.value(x);
        if flat >= t.numel() {
            return shape_err("select", format!("index {flat} of {}", t.numel()));
        }
        let v = t.data()[flat];
        Ok(self.push(Tensor::scalar(v), Op::Select(x, flat)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return shape_err("layer_norm", format!("width {c} vs gain/bias"));
        }
        let t = self.value(x);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let xs = t.row(i);
            let mu = xs.iter().sum::<f64>() / c as f64;
            let var = xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (xs[j] - mu) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        let shape = t.shape().to_vec();
        self.push_checked(
            "layer_norm",
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)` during
    /// training; outside training this is the identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !train || rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(TensorError::Degenerate {
                op: "dropout",
                detail: format!("rate {rate}"),
            });
        }
        let keep = 1.0 - rate;
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.numel())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = Tensor::from_parts(t.shape().to_vec(), mask);
        self.mul_const(x, mask)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let values = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), g)))
            .collect();
        Ok(Gradients {
            values,
            params: self
                .params
                .iter()
                .map(|(n, v)| (n.clone(), *v, self.value(*v).shape().to_vec()))
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.value(v);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2();
                let n = val(*b).cols();
                let bt = transpose_raw(val(*b).data(), k, n);
                accumulate(grads, *a, matmul_raw(g, &bt, m, n, k));
                let at = transpose_raw(val(*a).data(), m, k);
                accumulate(grads, *b, matmul_raw(&at, g, k, m, n));
            }
            Op::Transpose(a) => {
                let (r, c) = val(*a).dims2();
                accumulate(grads, *a, transpose_raw(g, c, r));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (da, db) = (val(*a).data(), val(*b).data());
                accumulate(grads, *a, g.iter().zip(db).map(|(g, y)| g * y).collect());
                accumulate(grads, *b, g.iter().zip(da).map(|(g, x)| g * x).collect());
            }
            Op::AddRow(x, row) => {
                accumulate(grads, *x, g.to_vec());
                let c = val(*row).numel();
                let mut gr = vec![0.0; c];
                for chunk in g.chunks(c) {
                    for (s, v) in gr.iter_mut().zip(chunk) {
                        *s += v;
                    }
                }
                accumulate(grads, *row, gr);
            }
            Op::MulConst(x, c) => {
                accumulate(grads, *x, g.iter().zip(c.data()).map(|(g, c)| g * c).collect());
            }
            Op::Scale(x, k) => accumulate(grads, *x, g.iter().map(|v| v * k).collect()),
            Op::Relu(x) => {
                let xs = val(*x).data();
                accumulate(
                    grads,
                    *x,
                    g.iter().zip(xs).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            Op::Sigmoid(x) => {
                let ys = node.value.data();
                accumulate(grads, *x, g.iter().zip(ys).map(|(g, y)| g * y * (1.0 - y)).collect());
            }
            Op::Tanh(x) => {
                let ys = node.value.data();
                accumulate(grads, *x, g.iter().zip(ys).map(|(g, y)| g * (1.0 - y * y)).collect());
            }
            Op::Softplus(x) => {
                let xs = val(*x).data();
                accumulate(grads, *x, g.iter().zip(xs).map(|(g, &v)| g * sigmoid(v)).collect());
            }
            Op::LnFloor(x, floor) => {
                let xs = val(*x).data();
                accumulate(
                    grads,
                    *x,
                    g.iter()
                        .zip(xs)
                        .map(|(g, &v)| if v > *floor { g / v } else { 0.0 })
                        .collect(),
                );
            }
            Op::Sum(x) => accumulate(grads, *x, vec![g[0]; val(*x).numel()]),
            Op::Mean(x) => {
                let n = val(*x).numel();
                accumulate(grads, *x, vec![g[0] / n as f64; n]);
            }
            Op::MaskedSoftmax(x, mask) => {
                let y = node.value.data();
                let c = node.value.cols();
                let mut dx = vec![0.0; y.len()];
                for (i, (yr, gr)) in y.chunks(c).zip(g.chunks(c)).enumerate() {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        if mask[i * c + j] {
                            dx[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut gp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        gp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    accumulate(grads, p, gp);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    accumulate(grads, p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::SliceCols(x, start) => {
                let (r, c) = val(*x).dims2();
                let len = node.value.cols();
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    gx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                accumulate(grads, *x, gx);
            }
            Op::GatherRows(x, idx) => {
                let (r, c) = val(*x).dims2();
                let mut gx = vec![0.0; r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        gx[i * c + j] += g[k * c + j];
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Select(x, flat) => {
                let mut gx = vec![0.0; val(*x).numel()];
                gx[*flat] = g[0];
                accumulate(grads, *x, gx);
            }
            Op::Reshape(x) => accumulate(grads, *x, g.to_vec()),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let c = val(*gain).numel();
                let gv = val(*gain).data();
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                let mut dx = vec![0.0; g.len()];
                for (i, &is) in inv_std.iter().enumerate() {
                    let gr = &g[i * c..(i + 1) * c];
                    let hr = &xhat[i * c..(i + 1) * c];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..c {
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                        let dh = gr[j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                    }
                    let n = c as f64;
                    for j in 0..c {
                        let dh = gr[j] * gv[j];
                        dx[i * c + j] = is / n * (n * dh - sum_dh - hr[j] * sum_dh_h);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gain, dgain);
                accumulate(grads, *bias, dbias);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Gradients from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    values: Vec<Option<Tensor>>,
    params: Vec<(String, Var, Vec<usize>)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` is upstream of the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.values.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient per bound parameter name. Parameters bound more than once get
    /// the sum; parameters the loss never reached get zeros.
    pub fn params(&self) -> BTreeMap<String, Tensor> {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut shapes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (name, v, shape) in &self.params {
            let numel = shape.iter().product::<usize>().max(1);
            let acc = out.entry(name.clone()).or_insert_with(|| vec![0.0; numel]);
            shapes.entry(name.clone()).or_insert_with(|| shape.clone());
            if let Some(g) = self.get(*v) {
                for (a, b) in acc.iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        out.into_iter()
            .map(|(name, data)| {
                let shape = shapes.remove(&name).unwrap_or_default();
                (name, Tensor::from_parts(shape, data))
            })
            .collect()
    }
}
