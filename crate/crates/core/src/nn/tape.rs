use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, TensorBase};

/// Handle to a value recorded on a [`TapeBase`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul { a: usize, b: usize },
    Transpose { x: usize },
    Add { a: usize, b: usize },
    AddRow { x: usize, row: usize },
    Mul { a: usize, b: usize },
    Affine { x: usize, alpha: S },
    Sigmoid { x: usize },
    Log { x: usize },
    SoftmaxRows { x: usize },
    SumAll { x: usize },
    MeanAll { x: usize },
    ConcatCols { parts: Vec<usize> },
    SliceCols { x: usize, from: usize, to: usize },
    StackRows { parts: Vec<usize> },
    Gather { table: usize, indices: Vec<u32> },
    BceLogits { logits: usize, labels: Vec<S> },
    CeLogits { logits: usize, labels: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    op: Op<S>,
}

/// Record of primitive operations; replaying it backward yields the
/// gradient of a scalar output with respect to every recorded leaf.
///
/// A tape lives for one forward/backward pair and is dropped afterwards.
#[derive(Debug, Default)]
pub struct TapeBase<S> {
    nodes: Vec<Node<S>>,
}

/// Per-node gradients produced by [`TapeBase::backward`].
///
/// Leaves that do not influence the loss hold all-zero gradients.
pub struct Gradients<S> {
    grads: Vec<Vec<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var) -> &[S] {
        &self.grads[var.0]
    }
}

impl<S: Scalar> TapeBase<S> {
    pub fn new() -> Self {
        TapeBase { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<S>, op: Op<S>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node { shape, data, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<S> {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.node(v).data
    }

    /// Scalar value of a `[1]`-shaped var.
    pub fn scalar_value(&self, v: Var) -> Result<S> {
        let n = self.node(v);
        if n.data.len() != 1 {
            return Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                n.shape
            )));
        }
        Ok(n.data[0])
    }

    pub fn to_tensor(&self, v: Var) -> TensorBase<S> {
        let n = self.node(v);
        TensorBase::new(n.shape.clone(), n.data.clone()).expect("node shapes are consistent")
    }

    // ---- leaves ----

    pub fn leaf(&mut self, t: &TensorBase<S>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf)
    }

    pub fn leaf_raw(&mut self, shape: Vec<usize>, data: Vec<S>) -> Var {
        self.push(shape, data, Op::Leaf)
    }

    pub fn scalar(&mut self, v: S) -> Var {
        self.push(vec![1], vec![v], Op::Leaf)
    }

    // ---- primitives ----

    fn dims2(&self, v: Var) -> (usize, usize) {
        let s = &self.node(v).shape;
        match s.len() {
            1 => (1, s[0]),
            2 => (s[0], s[1]),
            _ => panic!("expected rank <= 2 tensor, got {s:?}"),
        }
    }

    /// Matrix product of two 2-D vars.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        let mut out = vec![S::zero(); m * n];
        matmul_acc(&self.node(a).data, &self.node(b).data, m, k, n, &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMul { a: a.0, b: b.0 }))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.dims2(x);
        let src = &self.node(x).data;
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push(vec![c, r], out, Op::Transpose { x: x.0 })
    }

    /// Elementwise sum of two same-shape vars.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.node(a).shape != self.node(b).shape {
            return Err(Error::Dimension {
                op: "add",
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        let data = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.node(a).shape.clone();
        Ok(self.push(shape, data, Op::Add { a: a.0, b: b.0 }))
    }

    /// Adds a `[c]` row vector to every row of a `[r x c]` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims2(x);
        if self.node(row).data.len() != c {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: self.node(x).shape.clone(),
                rhs: self.node(row).shape.clone(),
            });
        }
        let mut data = self.node(x).data.clone();
        let rv = self.node(row).data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += rv[j];
            }
        }
        let shape = self.node(x).shape.clone();
        Ok(self.push(shape, data, Op::AddRow { x: x.0, row: row.0 }))
    }

    /// Elementwise product of two same-shape vars.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.node(a).shape != self.node(b).shape {
            return Err(Error::Dimension {
                op: "mul",
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        let data = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.node(a).shape.clone();
        Ok(self.push(shape, data, Op::Mul { a: a.0, b: b.0 }))
    }

    /// Elementwise `alpha * x + beta`.
    pub fn affine(&mut self, x: Var, alpha: S, beta: S) -> Var {
        let data = self
            .node(x)
            .data
            .iter()
            .map(|&v| alpha * v + beta)
            .collect();
        let shape = self.node(x).shape.clone();
        self.push(shape, data, Op::Affine { x: x.0, alpha })
    }

    /// Elementwise logistic sigmoid, stable on both tails.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data = self
            .node(x)
            .data
            .iter()
            .map(|&v| sigmoid_scalar(v))
            .collect();
        let shape = self.node(x).shape.clone();
        self.push(shape, data, Op::Sigmoid { x: x.0 })
    }

    /// Elementwise natural logarithm.
    pub fn log(&mut self, x: Var) -> Var {
        let data = self.node(x).data.iter().map(|&v| v.ln()).collect();
        let shape = self.node(x).shape.clone();
        self.push(shape, data, Op::Log { x: x.0 })
    }

    /// Softmax along each row of a 2-D var.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.dims2(x);
        let src = &self.node(x).data;
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            softmax_row(&src[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        let shape = self.node(x).shape.clone();
        self.push(shape, out, Op::SoftmaxRows { x: x.0 })
    }

    /// Sum of all entries, producing a `[1]` scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.node(x).data.iter().copied().sum();
        self.push(vec![1], vec![s], Op::SumAll { x: x.0 })
    }

    /// Mean of all entries, producing a `[1]` scalar.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.node(x).data.len();
        let s: S = self.node(x).data.iter().copied().sum();
        let mean = s / S::from_f64(n as f64);
        self.push(vec![1], vec![mean], Op::MeanAll { x: x.0 })
    }

    /// Concatenates 2-D vars with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols of zero parts"));
        }
        let (r, _) = self.dims2(parts[0]);
        let mut total_c = 0;
        for &p in parts {
            let (pr, pc) = self.dims2(p);
            if pr != r {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    lhs: self.node(parts[0]).shape.clone(),
                    rhs: self.node(p).shape.clone(),
                });
            }
            total_c += pc;
        }
        let mut data = vec![S::zero(); r * total_c];
        let mut col = 0;
        for &p in parts {
            let (_, pc) = self.dims2(p);
            let src = &self.node(p).data;
            for i in 0..r {
                data[i * total_c + col..i * total_c + col + pc]
                    .copy_from_slice(&src[i * pc..(i + 1) * pc]);
            }
            col += pc;
        }
        Ok(self.push(
            vec![r, total_c],
            data,
            Op::ConcatCols {
                parts: parts.iter().map(|v| v.0).collect(),
            },
        ))
    }

    /// Columns `[from, to)` of a 2-D var.
    pub fn slice_cols(&mut self, x: Var, from: usize, to: usize) -> Result<Var> {
        let (r, c) = self.dims2(x);
        if from >= to || to > c {
            return Err(Error::contract(format!(
                "slice_cols [{from}, {to}) out of range for {c} columns"
            )));
        }
        let w = to - from;
        let src = &self.node(x).data;
        let mut data = vec![S::zero(); r * w];
        for i in 0..r {
            data[i * w..(i + 1) * w].copy_from_slice(&src[i * c + from..i * c + to]);
        }
        Ok(self.push(vec![r, w], data, Op::SliceCols { x: x.0, from, to }))
    }

    /// Stacks 2-D vars with equal column counts along rows.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("stack_rows of zero parts"));
        }
        let (_, c) = self.dims2(parts[0]);
        let mut total_r = 0;
        for &p in parts {
            let (pr, pc) = self.dims2(p);
            if pc != c {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    lhs: self.node(parts[0]).shape.clone(),
                    rhs: self.node(p).shape.clone(),
                });
            }
            total_r += pr;
        }
        let mut data = Vec::with_capacity(total_r * c);
        for &p in parts {
            data.extend_from_slice(&self.node(p).data);
        }
        Ok(self.push(
            vec![total_r, c],
            data,
            Op::StackRows {
                parts: parts.iter().map(|v| v.0).collect(),
            },
        ))
    }

    /// Gathers rows of an embedding table: output row `i` is `table[indices[i]]`.
    pub fn gather(&mut self, table: Var, indices: &[u32]) -> Result<Var> {
        let (rows, c) = self.dims2(table);
        let src = &self.node(table).data;
        let mut data = Vec::with_capacity(indices.len() * c);
        for &idx in indices {
            let idx = idx as usize;
            if idx >= rows {
                return Err(Error::contract(format!(
                    "gather index {idx} out of range for {rows} rows"
                )));
            }
            data.extend_from_slice(&src[idx * c..(idx + 1) * c]);
        }
        Ok(self.push(
            vec![indices.len(), c],
            data,
            Op::Gather {
                table: table.0,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Per-element binary cross-entropy from logits.
    ///
    /// Computed as `max(z,0) - y*z + ln(1+exp(-|z|))`, which equals
    /// `-[y ln s(z) + (1-y) ln(1-s(z))]` without ever forming the
    /// saturating probabilities.
    pub fn bce_logits(&mut self, logits: Var, labels: &[S]) -> Result<Var> {
        let n = self.node(logits).data.len();
        if labels.len() != n {
            return Err(Error::Dimension {
                op: "bce_logits",
                lhs: self.node(logits).shape.clone(),
                rhs: vec![labels.len()],
            });
        }
        let data: Vec<S> = self
            .node(logits)
            .data
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(S::zero()) - y * z + (-z.abs()).exp().ln_1p())
            .collect();
        let shape = self.node(logits).shape.clone();
        Ok(self.push(
            shape,
            data,
            Op::BceLogits {
                logits: logits.0,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Per-row multiclass cross-entropy from logits `[b x c]` and class
    /// indices `[b]`, producing `[b]`.
    pub fn ce_logits(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(logits);
        if labels.len() != r {
            return Err(Error::Dimension {
                op: "ce_logits",
                lhs: self.node(logits).shape.clone(),
                rhs: vec![labels.len()],
            });
        }
        let src = &self.node(logits).data;
        let mut data = Vec::with_capacity(r);
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::contract(format!(
                    "class label {y} out of range for {c} classes"
                )));
            }
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
            let lse: S = row.iter().map(|&v| (v - max).exp()).sum();
            data.push(max + lse.ln() - row[y]);
        }
        Ok(self.push(
            vec![r],
            data,
            Op::CeLogits {
                logits: logits.0,
                labels: labels.to_vec(),
            },
        ))
    }

    // ---- reverse pass ----

    /// Gradient of a scalar loss with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.node(loss).data.len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.node(loss).shape
            )));
        }
        let mut grads: Vec<Vec<S>> = self
            .nodes
            .iter()
            .map(|n| vec![S::zero(); n.data.len()])
            .collect();
        let mut touched = vec![false; self.nodes.len()];
        grads[loss.0][0] = S::one();
        touched[loss.0] = true;

        for i in (0..=loss.0).rev() {
            if !touched[i] {
                continue;
            }
            // Split so the node's own grad can be read while inputs are written.
            let (before, after) = grads.split_at_mut(i);
            let g = &after[0];
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = shape2(&self.nodes[*a].shape);
                    let n = shape2(&self.nodes[i].shape).1;
                    // dA += G * B^T ; dB += A^T * G
                    matmul_a_bt_acc(g, &self.nodes[*b].data, m, n, k, &mut before[*a]);
                    matmul_at_b_acc(&self.nodes[*a].data, g, m, k, n, &mut before[*b]);
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::Transpose { x } => {
                    let (r, c) = shape2(&self.nodes[i].shape);
                    let gx = &mut before[*x];
                    for p in 0..r {
                        for q in 0..c {
                            gx[q * r + p] += g[p * c + q];
                        }
                    }
                    touched[*x] = true;
                }
                Op::Add { a, b } => {
                    if a == b {
                        for (ga, &gv) in before[*a].iter_mut().zip(g) {
                            *ga += gv + gv;
                        }
                    } else {
                        for (ga, &gv) in before[*a].iter_mut().zip(g) {
                            *ga += gv;
                        }
                        for (gb, &gv) in before[*b].iter_mut().zip(g) {
                            *gb += gv;
                        }
                    }
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::AddRow { x, row } => {
                    let (r, c) = shape2(&self.nodes[i].shape);
                    for (gx, &gv) in before[*x].iter_mut().zip(g) {
                        *gx += gv;
                    }
                    let gr = &mut before[*row];
                    for p in 0..r {
                        for q in 0..c {
                            gr[q] += g[p * c + q];
                        }
                    }
                    touched[*x] = true;
                    touched[*row] = true;
                }
                Op::Mul { a, b } => {
                    if a == b {
                        let va = &self.nodes[*a].data;
                        for ((ga, &gv), &xv) in before[*a].iter_mut().zip(g).zip(va) {
                            *ga += gv * (xv + xv);
                        }
                    } else {
                        let va = &self.nodes[*a].data;
                        let vb = &self.nodes[*b].data;
                        for ((ga, &gv), &bv) in before[*a].iter_mut().zip(g).zip(vb) {
                            *ga += gv * bv;
                        }
                        for ((gb, &gv), &av) in before[*b].iter_mut().zip(g).zip(va) {
                            *gb += gv * av;
                        }
                    }
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::Affine { x, alpha } => {
                    for (gx, &gv) in before[*x].iter_mut().zip(g) {
                        *gx += *alpha * gv;
                    }
                    touched[*x] = true;
                }
                Op::Sigmoid { x } => {
                    let out = &self.nodes[i].data;
                    for ((gx, &gv), &s) in before[*x].iter_mut().zip(g).zip(out) {
                        *gx += gv * s * (S::one() - s);
                    }
                    touched[*x] = true;
                }
                Op::Log { x } => {
                    let inp = &self.nodes[*x].data;
                    for ((gx, &gv), &v) in before[*x].iter_mut().zip(g).zip(inp) {
                        *gx += gv / v;
                    }
                    touched[*x] = true;
                }
                Op::SoftmaxRows { x } => {
                    let (r, c) = shape2(&self.nodes[i].shape);
                    let out = &self.nodes[i].data;
                    let gx = &mut before[*x];
                    for p in 0..r {
                        let o = &out[p * c..(p + 1) * c];
                        let gr = &g[p * c..(p + 1) * c];
                        let dot: S = o.iter().zip(gr).map(|(&s, &gv)| s * gv).sum();
                        let dst = &mut gx[p * c..(p + 1) * c];
                        for ((d, &s), &gv) in dst.iter_mut().zip(o).zip(gr) {
                            *d += s * (gv - dot);
                        }
                    }
                    touched[*x] = true;
                }
                Op::SumAll { x } => {
                    let gv = g[0];
                    for gx in before[*x].iter_mut() {
                        *gx += gv;
                    }
                    touched[*x] = true;
                }
                Op::MeanAll { x } => {
                    let n = self.nodes[*x].data.len();
                    let gv = g[0] / S::from_f64(n as f64);
                    for gx in before[*x].iter_mut() {
                        *gx += gv;
                    }
                    touched[*x] = true;
                }
                Op::ConcatCols { parts } => {
                    let (r, total_c) = shape2(&self.nodes[i].shape);
                    let mut col = 0;
                    for &p in parts {
                        let pc = shape2(&self.nodes[p].shape).1;
                        let gp = &mut before[p];
                        for q in 0..r {
                            for j in 0..pc {
                                gp[q * pc + j] += g[q * total_c + col + j];
                            }
                        }
                        col += pc;
                        touched[p] = true;
                    }
                }
                Op::SliceCols { x, from, to } => {
                    let (r, w) = shape2(&self.nodes[i].shape);
                    let c = shape2(&self.nodes[*x].shape).1;
                    let gx = &mut before[*x];
                    let _ = to;
                    for p in 0..r {
                        for j in 0..w {
                            gx[p * c + from + j] += g[p * w + j];
                        }
                    }
                    touched[*x] = true;
                }
                Op::StackRows { parts } => {
                    let c = shape2(&self.nodes[i].shape).1;
                    let mut row = 0;
                    for &p in parts {
                        let pr = shape2(&self.nodes[p].shape).0;
                        let gp = &mut before[p];
                        let len = pr * c;
                        for (dst, &gv) in gp.iter_mut().zip(&g[row * c..row * c + len]) {
                            *dst += gv;
                        }
                        row += pr;
                        touched[p] = true;
                    }
                }
                Op::Gather { table, indices } => {
                    let c = shape2(&self.nodes[i].shape).1;
                    let gt = &mut before[*table];
                    for (pos, &idx) in indices.iter().enumerate() {
                        let base = idx as usize * c;
                        for j in 0..c {
                            gt[base + j] += g[pos * c + j];
                        }
                    }
                    touched[*table] = true;
                }
                Op::BceLogits { logits, labels } => {
                    let z = &self.nodes[*logits].data;
                    let gl = &mut before[*logits];
                    for (((d, &gv), &zv), &y) in gl.iter_mut().zip(g).zip(z).zip(labels) {
                        *d += gv * (sigmoid_scalar(zv) - y);
                    }
                    touched[*logits] = true;
                }
                Op::CeLogits { logits, labels } => {
                    let (_, c) = shape2(&self.nodes[*logits].shape);
                    let z = &self.nodes[*logits].data;
                    let gl = &mut before[*logits];
                    for (p, &y) in labels.iter().enumerate() {
                        let row = &z[p * c..(p + 1) * c];
                        let mut probs = vec![S::zero(); c];
                        softmax_row(row, &mut probs);
                        let gv = g[p];
                        let dst = &mut gl[p * c..(p + 1) * c];
                        for (j, (d, &pr)) in dst.iter_mut().zip(&probs).enumerate() {
                            let ind = if j == y { S::one() } else { S::zero() };
                            *d += gv * (pr - ind);
                        }
                    }
                    touched[*logits] = true;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn shape2(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("expected rank <= 2 tensor, got {shape:?}"),
    }
}

pub(crate) fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn softmax_row<S: Scalar>(row: &[S], out: &mut [S]) {
    let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let mut sum = S::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = TapeBase::new();
        let i2 = tape.leaf(&t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let a = tape.leaf(&t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let c = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_zero() {
        let mut tape = TapeBase::new();
        let a = tape.leaf(&t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let z = tape.leaf(&Tensor::zeros(vec![2, 2]));
        let c = tape.matmul(a, z).unwrap();
        assert_eq!(tape.value(c), &[0.0; 4]);
    }

    #[test]
    fn matmul_row_times_column() {
        let mut tape = TapeBase::new();
        let a = tape.leaf(&t(vec![1, 2], vec![1.0, 2.0]));
        let b = tape.leaf(&t(vec![2, 1], vec![3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        // hand arithmetic: 1*3 + 2*4
        assert_eq!(tape.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let mut tape = TapeBase::new();
        let a = tape.leaf(&Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(&Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "message should name shapes: {msg}");
    }

    #[test]
    fn sigmoid_values() {
        let mut tape = TapeBase::new();
        let x = tape.leaf(&t(vec![3], vec![0.0, 50.0, 1.0]));
        let s = tape.sigmoid(x);
        let v = tape.value(s);
        assert_eq!(v[0], 0.5);
        assert!((v[1] - 1.0).abs() < 1e-15);
        assert!((v[2] - 0.7310585786).abs() < 1e-9);
        // open interval: even extreme negatives stay positive
        let mut tape = TapeBase::new();
        let x = tape.leaf(&t(vec![1], vec![-700.0]));
        let s = tape.sigmoid(x);
        assert!(tape.value(s)[0] > 0.0);
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut tape = TapeBase::new();
        let p = tape.leaf(&t(vec![2, 3], vec![0.3, -1.0, 2.0, 0.0, 5.0, -0.5]));
        let loss = tape.sum_all(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p), &[1.0; 6]);
    }

    #[test]
    fn backward_disconnected_is_zero() {
        let mut tape = TapeBase::new();
        let p = tape.leaf(&t(vec![2], vec![1.0, 2.0]));
        let q = tape.leaf(&t(vec![2], vec![3.0, 4.0]));
        let s = tape.sum_all(q);
        let loss = tape.affine(s, 1.0, 0.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p), &[0.0, 0.0]);
        assert_eq!(grads.get(q), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = TapeBase::new();
        let p = tape.leaf(&t(vec![2], vec![1.0, 2.0]));
        let s = tape.sigmoid(p);
        assert!(tape.backward(s).is_err());
    }

    #[test]
    fn backward_sigmoid_of_product_matches_finite_difference() {
        let w0 = 0.3;
        let x0 = 2.0;
        let f = |w: f64| {
            let mut tape = TapeBase::new();
            let w_var = tape.leaf(&t(vec![1, 1], vec![w]));
            let x_var = tape.leaf(&t(vec![1, 1], vec![x0]));
            let prod = tape.matmul(w_var, x_var).unwrap();
            let s = tape.sigmoid(prod);
            let loss = tape.sum_all(s);
            (tape, w_var, loss)
        };
        let (tape, w_var, loss) = f(w0);
        let analytic = tape.backward(loss).unwrap().get(w_var)[0];
        let h = 1e-5;
        let up = {
            let (tape, _, loss) = f(w0 + h);
            tape.scalar_value(loss).unwrap()
        };
        let down = {
            let (tape, _, loss) = f(w0 - h);
            tape.scalar_value(loss).unwrap()
        };
        let numeric = (up - down) / (2.0 * h);
        assert!(
            ((analytic - numeric) / numeric).abs() < 1e-6,
            "analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn bce_logits_matches_probability_form() {
        let mut tape = TapeBase::new();
        // z = 0 -> p = 0.5 -> loss = ln 2
        let z = tape.leaf(&t(vec![2], vec![0.0, 1.3]));
        let l = tape.bce_logits(z, &[1.0, 0.0]).unwrap();
        let v = tape.value(l);
        assert!((v[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let p: f64 = 1.0 / (1.0 + (-1.3f64).exp());
        assert!((v[1] - -(1.0 - p).ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_logits_two_class() {
        let mut tape = TapeBase::new();
        let z = tape.leaf(&t(vec![1, 2], vec![1.0, -1.0]));
        let l = tape.ce_logits(z, &[0]).unwrap();
        // -ln softmax_0 = -ln(e^1 / (e^1 + e^-1))
        let p0: f64 = 1.0f64.exp() / (1.0f64.exp() + (-1.0f64).exp());
        assert!((tape.value(l)[0] - -p0.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = TapeBase::new();
        let z = tape.leaf(&t(vec![2, 3], vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]));
        let s = tape.softmax_rows(z);
        let v = tape.value(s);
        assert!((v[0] + v[1] + v[2] - 1.0).abs() < 1e-12);
        assert!((v[3] + v[4] + v[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gather_and_scatter_gradient() {
        let mut tape = TapeBase::new();
        let table = tape.leaf(&t(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let g = tape.gather(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(g), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let loss = tape.sum_all(g);
        let grads = tape.backward(loss).unwrap();
        // row 2 gathered twice, row 0 once, row 1 never
        assert_eq!(grads.get(table), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn linearity_of_backward() {
        // grad of (l1 + l2) equals grad l1 + grad l2
        let x0 = vec![0.7, -0.2, 1.5];
        let build = |tape: &mut TapeBase<f64>| {
            let x = tape.leaf(&t(vec![1, 3], x0.clone()));
            let s = tape.sigmoid(x);
            let l1 = tape.sum_all(s);
            let sq = tape.mul(x, x).unwrap();
            let l2 = tape.mean_all(sq);
            (x, l1, l2)
        };
        let mut tape = TapeBase::new();
        let (x, l1, l2) = build(&mut tape);
        let total = tape.add(l1, l2).unwrap();
        let g_total = tape.backward(total).unwrap().get(x).to_vec();
        let g1 = tape.backward(l1).unwrap().get(x).to_vec();
        let g2 = tape.backward(l2).unwrap().get(x).to_vec();
        for i in 0..3 {
            assert!((g_total[i] - (g1[i] + g2[i])).abs() < 1e-14);
        }
    }
}
