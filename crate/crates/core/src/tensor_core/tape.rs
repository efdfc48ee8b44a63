//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation evaluates eagerly and appends a node holding its
//! output and whatever it needs for the backward pass. [`Tape::backward`]
//! walks the nodes in reverse and only visits nodes that depend on a
//! leaf with `requires_grad` set, so frozen weights cost nothing on the
//! way back.

use crate::attention::AttentionMask;
use crate::error::{Result, RpoError};

use super::ops::{
    layer_norm_kernel, masked_softmax_kernel, matmul_at_kernel, matmul_bt_kernel, matmul_kernel,
    quick_gelu, quick_gelu_grad,
};
use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskedSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    QuickGelu(Var),
    SliceRows {
        src: Var,
        start: usize,
    },
    SliceCols {
        src: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    Reshape(Var),
    NormalizeRows {
        src: Var,
        norms: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of evaluated operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the tape's trainable leaves.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, present only for leaves that require gradients
    /// and were reached from the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Accumulates the gradient of `v` into `target`'s gradient slot.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => target.accumulate_grad(g),
            None if target.requires_grad() => {
                Err(RpoError::MissingGradient(format!("tape node {}", v.0)))
            }
            None => Ok(()),
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_derived(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let value = Tensor::new(shape, data).expect("kernel output matches shape");
        self.push(value, op, needs_grad)
    }

    /// Registers `t` as a leaf. Gradients flow to it iff it requires them.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let needs_grad = t.requires_grad();
        let mut value = t.clone();
        value.clear_grad();
        self.push(value, Op::Leaf, needs_grad)
    }

    /// Registers a value that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let value = t.with_requires_grad(false);
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(RpoError::shape(op, other, &[0, 0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(RpoError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push_derived(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` for `a[m×k]`, `b[n×k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_bt")?;
        let (n, k2) = self.dims2(b, "matmul_bt")?;
        if k != k2 {
            return Err(RpoError::shape("matmul_bt", self.shape(a), self.shape(b)));
        }
        let out = matmul_bt_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push_derived(vec![m, n], out, Op::MatMulBt(a, b), &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(RpoError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_derived(shape, out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a length-`n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims2(a, "add_row")?;
        if self.value(row).numel() != n {
            return Err(RpoError::shape("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for i in 0..m {
            for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push_derived(vec![m, n], out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_derived(shape, out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push_derived(shape, out, Op::Scale(a, c), &[a])
    }

    /// Row-wise softmax of `a + mask`; see [`super::masked_softmax_rows`].
    pub fn masked_softmax(&mut self, a: Var, mask: &AttentionMask) -> Result<Var> {
        let (m, n) = self.dims2(a, "masked_softmax")?;
        if (m, n) != (mask.rows(), mask.cols()) {
            return Err(RpoError::shape(
                "masked_softmax",
                self.shape(a),
                &[mask.rows(), mask.cols()],
            ));
        }
        let out = masked_softmax_kernel(self.value(a).data(), mask.entries(), m, n)?;
        Ok(self.push_derived(vec![m, n], out, Op::MaskedSoftmax(a), &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(RpoError::config("layer_norm eps must be positive"));
        }
        let d = self.value(x).cols();
        if self.value(gain).numel() != d || self.value(bias).numel() != d {
            return Err(RpoError::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let res = layer_norm_kernel(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            d,
            eps,
        );
        let shape = self.shape(x).to_vec();
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat: res.xhat,
            rstd: res.rstd,
        };
        Ok(self.push_derived(shape, res.y, op, &[x, gain, bias]))
    }

    pub fn quick_gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).data().iter().map(|&x| quick_gelu(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push_derived(shape, out, Op::QuickGelu(a), &[a])
    }

    pub fn slice_rows(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(src, "slice_rows")?;
        if start + len > r {
            return Err(RpoError::shape("slice_rows", self.shape(src), &[start, len]));
        }
        let out = self.value(src).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push_derived(vec![len, c], out, Op::SliceRows { src, start }, &[src]))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(src, "slice_cols")?;
        if start + len > c {
            return Err(RpoError::shape("slice_cols", self.shape(src), &[start, len]));
        }
        let data = self.value(src).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&data[i * c + start..i * c + start + len]);
        }
        Ok(self.push_derived(vec![r, len], out, Op::SliceCols { src, start }, &[src]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| RpoError::config("concat_rows of nothing"))?;
        let c = self.dims2(first, "concat_rows")?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, pc) = self.dims2(p, "concat_rows")?;
            if pc != c {
                return Err(RpoError::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push_derived(vec![rows, c], out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| RpoError::config("concat_cols of nothing"))?;
        let r = self.dims2(first, "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims2(p, "concat_cols")?;
            if pr != r {
                return Err(RpoError::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push_derived(vec![r, total], out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Rows `ids` of an embedding table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(table, "gather_rows")?;
        let data = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(RpoError::shape("gather_rows", self.shape(table), &[id]));
            }
            out.extend_from_slice(&data[id * c..(id + 1) * c]);
        }
        let op = Op::GatherRows {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push_derived(vec![ids.len(), c], out, op, &[table]))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(RpoError::shape("reshape", self.shape(a), &shape));
        }
        let out = self.value(a).data().to_vec();
        Ok(self.push_derived(shape, out, Op::Reshape(a), &[a]))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(&mut self, src: Var) -> Result<Var> {
        let (r, c) = self.dims2(src, "normalize_rows")?;
        let data = self.value(src).data();
        let mut norms = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &data[i * c..(i + 1) * c];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(RpoError::DegenerateVector {
                    op: "normalize_rows",
                });
            }
            norms.push(n);
            out.extend(row.iter().map(|x| x / n));
        }
        Ok(self.push_derived(vec![r, c], out, Op::NormalizeRows { src, norms }, &[src]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_derived(vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push_derived(vec![1], vec![s], Op::Mean(a), &[a])
    }

    /// Mean softmax cross-entropy of `logits[B×C]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (b, c) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != b || targets.iter().any(|&t| t >= c) {
            return Err(RpoError::shape("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        let data = self.value(logits).data();
        let mut probs = Vec::with_capacity(b * c);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = &data[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row {
                sum += (x - max).exp();
            }
            let log_z = max + sum.ln();
            loss += log_z - row[t];
            probs.extend(row.iter().map(|x| (x - log_z).exp()));
        }
        loss /= b as f64;
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push_derived(vec![1], vec![loss], op, &[logits]))
    }

    /// Gradients of the scalar `loss` with respect to every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(RpoError::shape("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
        }

        // Only trainable leaves keep their gradients.
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !(matches!(node.op, Op::Leaf) && node.needs_grad) {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).cols();
                if self.wants(*a) {
                    // dA = G · Bᵀ
                    let da = matmul_bt_kernel(g, self.value(*b).data(), m, n, k);
                    accumulate(&mut grads[a.0], da);
                }
                if self.wants(*b) {
                    // dB = Aᵀ · G
                    let db = matmul_at_kernel(self.value(*a).data(), g, m, k, n);
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).rows();
                if self.wants(*a) {
                    // dA = G · B
                    let da = matmul_kernel(g, self.value(*b).data(), m, n, k);
                    accumulate(&mut grads[a.0], da);
                }
                if self.wants(*b) {
                    // dB = Gᵀ · A
                    let db = matmul_at_kernel(g, self.value(*a).data(), m, n, k);
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.to_vec());
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if self.wants(*row) {
                    let n = out.cols();
                    let mut dr = vec![0.0; n];
                    for chunk in g.chunks(n) {
                        dr.iter_mut().zip(chunk).for_each(|(d, x)| *d += x);
                    }
                    accumulate(&mut grads[row.0], dr);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let bd = self.value(*b).data();
                    accumulate(&mut grads[a.0], g.iter().zip(bd).map(|(x, y)| x * y).collect());
                }
                if self.wants(*b) {
                    let ad = self.value(*a).data();
                    accumulate(&mut grads[b.0], g.iter().zip(ad).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale(a, c) => {
                accumulate(&mut grads[a.0], g.iter().map(|x| x * c).collect());
            }
            Op::MaskedSoftmax(a) => {
                let (m, n) = out.dims2();
                let y = out.data();
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..n {
                        dx[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(&mut grads[a.0], dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = out.cols();
                let rows = out.numel() / d;
                let gv = self.value(*gain).data();
                if self.wants(*gain) || self.wants(*bias) {
                    let mut dg = vec![0.0; d];
                    let mut db = vec![0.0; d];
                    for r in 0..rows {
                        for c in 0..d {
                            dg[c] += g[r * d + c] * xhat[r * d + c];
                            db[c] += g[r * d + c];
                        }
                    }
                    if self.wants(*gain) {
                        accumulate(&mut grads[gain.0], dg);
                    }
                    if self.wants(*bias) {
                        accumulate(&mut grads[bias.0], db);
                    }
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; rows * d];
                    let df = d as f64;
                    for r in 0..rows {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for c in 0..d {
                            let dh = g[r * d + c] * gv[c];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[r * d + c];
                        }
                        for c in 0..d {
                            let dh = g[r * d + c] * gv[c];
                            dx[r * d + c] =
                                rstd[r] / df * (df * dh - sum_dh - xhat[r * d + c] * sum_dh_h);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::QuickGelu(a) => {
                let xs = self.value(*a).data();
                let dx = g
                    .iter()
                    .zip(xs)
                    .map(|(gi, &x)| gi * quick_gelu_grad(x))
                    .collect();
                accumulate(&mut grads[a.0], dx);
            }
            Op::SliceRows { src, start } => {
                let c = out.cols();
                let mut dx = vec![0.0; self.value(*src).numel()];
                dx[start * c..start * c + g.len()].copy_from_slice(g);
                accumulate(&mut grads[src.0], dx);
            }
            Op::SliceCols { src, start } => {
                let (r, c) = self.value(*src).dims2();
                let w = out.cols();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                accumulate(&mut grads[src.0], dx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    if self.wants(*p) {
                        accumulate(&mut grads[p.0], g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = out.dims2();
                let mut col = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.wants(*p) {
                        let mut dp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            dp.extend_from_slice(&g[i * total + col..i * total + col + w]);
                        }
                        accumulate(&mut grads[p.0], dp);
                    }
                    col += w;
                }
            }
            Op::GatherRows { table, ids } => {
                let c = out.cols();
                let mut dt = vec![0.0; self.value(*table).numel()];
                for (k, &id) in ids.iter().enumerate() {
                    for j in 0..c {
                        dt[id * c + j] += g[k * c + j];
                    }
                }
                accumulate(&mut grads[table.0], dt);
            }
            Op::Reshape(a) => accumulate(&mut grads[a.0], g.to_vec()),
            Op::NormalizeRows { src, norms } => {
                let c = out.cols();
                let y = out.data();
                let mut dx = vec![0.0; y.len()];
                for (i, n) in norms.iter().enumerate() {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dx[i * c + j] = (gr[j] - yr[j] * dot) / n;
                    }
                }
                accumulate(&mut grads[src.0], dx);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                accumulate(&mut grads[a.0], vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                accumulate(&mut grads[a.0], vec![g[0] / n as f64; n]);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let b = targets.len();
                let c = probs.len() / b;
                let mut dl = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * c + t] -= 1.0;
                }
                let s = g[0] / b as f64;
                dl.iter_mut().for_each(|x| *x *= s);
                accumulate(&mut grads[logits.0], dl);
            }
        }
    }
}
