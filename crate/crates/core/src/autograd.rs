//! A small tape-based reverse-mode autodiff over [`Matrix`] values.
//!
//! Every op appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse and accumulates adjoints. Scalars are `1x1`
//! matrices. Parameters enter the tape once per graph through
//! [`Graph::param`], so their adjoints accumulate across every use.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::tensor::Matrix;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Lower/upper probability clamp used by binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

enum Op {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    NegSigmoid(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, rstd: Vec<f64> },
    MaskedSoftmax(Var),
    GatherRows { table: Var, ids: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    GroupMean { x: Var, groups: Vec<Vec<usize>> },
    Dropout { x: Var, mask: Vec<f64> },
    BceMean { probs: Var, labels: Vec<f64> },
    SoftmaxXentMean { logits: Var, targets: Vec<usize>, probs: Matrix },
    Combine(Vec<(Var, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

/// Boolean attention mask shared between heads; `true` means "may attend".
#[derive(Clone, Debug)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Rc<Vec<bool>>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Self {
        assert_eq!(allowed.len(), rows * cols);
        Self { rows, cols, allowed: Rc::new(allowed) }
    }

    /// Queries may attend to every key whose `key_valid` flag is set; queries
    /// whose own `query_valid` flag is clear attend to nothing.
    pub fn padding(query_valid: &[bool], key_valid: &[bool]) -> Self {
        let mut allowed = Vec::with_capacity(query_valid.len() * key_valid.len());
        for &q in query_valid {
            allowed.extend(key_valid.iter().map(|&k| q && k));
        }
        Self::new(query_valid.len(), key_valid.len(), allowed)
    }

    /// Lower-triangular mask for autoregressive self-attention.
    pub fn causal(len: usize) -> Self {
        let mut allowed = Vec::with_capacity(len * len);
        for i in 0..len {
            allowed.extend((0..len).map(|j| j <= i));
        }
        Self::new(len, len, allowed)
    }

    #[inline]
    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf for parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize, value: &Matrix) -> Var {
        if index >= self.params.len() {
            self.params.resize(index + 1, None);
        }
        if let Some(var) = self.params[index] {
            return var;
        }
        let var = self.push(value.clone(), Op::Leaf);
        self.params[index] = Some(var);
        var
    }

    /// The node bound to parameter `index`, if it was used.
    pub fn param_var(&self, index: usize) -> Option<Var> {
        self.params.get(index).copied().flatten()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shapes");
        let mut out = x.clone();
        out.add_assign(y);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((1, x.cols()), r.shape(), "add_row shapes");
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).scaled(factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape");
        self.push(out, Op::Relu(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + libm::tanh(GELU_C * (v + GELU_A * v * v * v))))
            .collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape");
        self.push(out, Op::Gelu(a))
    }

    /// `1 / (1 + exp(x))` elementwise.
    pub fn neg_sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| neg_sigmoid(v)).collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape");
        self.push(out, Op::NegSigmoid(a))
    }

    /// Per-row layer normalization with `1 x cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let g = self.value(gain);
        let b = self.value(bias);
        assert_eq!(g.shape(), (1, cols));
        assert_eq!(b.shape(), (1, cols));
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = input.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            rstd.push(s);
            for c in 0..cols {
                let h = (row[c] - mean) * s;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data()[c] + b.data()[c]);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    /// Row softmax restricted to allowed entries. Fully masked rows become zero.
    pub fn masked_softmax(&mut self, a: Var, mask: &AttentionMask) -> Var {
        let x = self.value(a);
        assert_eq!((mask.rows, mask.cols), x.shape(), "mask shape");
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mut max = f64::NEG_INFINITY;
            for (c, &v) in row.iter().enumerate() {
                if mask.allows(r, c) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for (c, &v) in row.iter().enumerate() {
                if mask.allows(r, c) {
                    let e = libm::exp(v - max);
                    out.set(r, c, e);
                    total += e;
                }
            }
            for o in out.row_mut(r) {
                *o /= total;
            }
        }
        self.push(out, Op::MaskedSoftmax(a))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::GatherRows { table, ids: ids.to_vec() })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols(), "slice_cols range");
        let mut out = Matrix::zeros(x.rows(), len);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x: a, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.rows(), rows, "concat_cols rows");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + x.cols()].copy_from_slice(x.row(r));
            }
            offset += x.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Row `i` of the result is the mean of the rows of `a` listed in `groups[i]`.
    pub fn group_mean(&mut self, a: Var, groups: Vec<Vec<usize>>) -> Var {
        let x = self.value(a);
        let mut out = Matrix::zeros(groups.len(), x.cols());
        for (g, members) in groups.iter().enumerate() {
            assert!(!members.is_empty(), "empty group");
            let inv = 1.0 / members.len() as f64;
            let row = out.row_mut(g);
            for &m in members {
                for (o, v) in row.iter_mut().zip(x.row(m)) {
                    *o += v;
                }
            }
            for o in row.iter_mut() {
                *o *= inv;
            }
        }
        self.push(out, Op::GroupMean { x: a, groups })
    }

    /// Multiplies elementwise by a precomputed (already rescaled) mask.
    pub fn dropout(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let x = self.value(a);
        assert_eq!(mask.len(), x.len());
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape");
        self.push(out, Op::Dropout { x: a, mask })
    }

    /// Mean binary cross-entropy of an `n x 1` probability column against 0/1 labels.
    pub fn bce_mean(&mut self, probs: Var, labels: &[f64]) -> Var {
        let p = self.value(probs);
        assert_eq!(p.len(), labels.len(), "bce lengths");
        let value = binary_cross_entropy(p.data(), labels);
        self.push(Matrix::filled(1, 1, value), Op::BceMean { probs, labels: labels.to_vec() })
    }

    /// Mean over rows of `-log softmax(row)[target]`.
    pub fn softmax_xent_mean(&mut self, logits: Var, targets: &[usize]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows(), targets.len(), "xent lengths");
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let lp = log_softmax(x.row(r));
            total -= lp[t];
            for (o, l) in probs.row_mut(r).iter_mut().zip(&lp) {
                *o = libm::exp(*l);
            }
        }
        let value = total / targets.len() as f64;
        self.push(
            Matrix::filled(1, 1, value),
            Op::SoftmaxXentMean { logits, targets: targets.to_vec(), probs },
        )
    }

    /// `Σ coeff · scalar`
    pub fn combine(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut value = 0.0;
        for &(v, c) in terms {
            value += c * self.scalar(v);
        }
        self.push(Matrix::filled(1, 1, value), Op::Combine(terms.to_vec()))
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let mut sum = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (s, v) in sum.data_mut().iter_mut().zip(g.row(r)) {
                        *s += v;
                    }
                }
                accumulate(grads, *row, sum);
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_t(y));
                accumulate(grads, *b, x.t_matmul(g));
            }
            Op::MatMulT(a, b) => {
                // out = x yᵀ: dx = g y, dy = gᵀ x
                let (x, y) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul(y));
                accumulate(grads, *b, g.t_matmul(x));
            }
            Op::Scale(a, factor) => accumulate(grads, *a, g.scaled(*factor)),
            Op::Relu(a) => {
                let x = self.value(*a);
                accumulate(grads, *a, zip_map(g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                accumulate(grads, *a, zip_map(g, x, |gv, xv| gv * gelu_derivative(xv)));
            }
            Op::NegSigmoid(a) => {
                let y = &node.value;
                accumulate(grads, *a, zip_map(g, y, |gv, yv| -gv * yv * (1.0 - yv)));
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (rows, cols) = xhat.shape();
                let gamma = self.value(*gain);
                let mut dx = Matrix::zeros(rows, cols);
                let mut dgain = Matrix::zeros(1, cols);
                let mut dbias = Matrix::zeros(1, cols);
                let n = cols as f64;
                for r in 0..rows {
                    let gr = g.row(r);
                    let hr = xhat.row(r);
                    let mut mean_d = 0.0;
                    let mut mean_dh = 0.0;
                    for c in 0..cols {
                        let d = gr[c] * gamma.data()[c];
                        mean_d += d;
                        mean_dh += d * hr[c];
                        dgain.data_mut()[c] += gr[c] * hr[c];
                        dbias.data_mut()[c] += gr[c];
                    }
                    mean_d /= n;
                    mean_dh /= n;
                    let out = dx.row_mut(r);
                    for c in 0..cols {
                        let d = gr[c] * gamma.data()[c];
                        out[c] = rstd[r] * (d - mean_d - hr[c] * mean_dh);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gain, dgain);
                accumulate(grads, *bias, dbias);
            }
            Op::MaskedSoftmax(a) => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (yv, gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = yv * (gv - inner);
                    }
                }
                accumulate(grads, *a, dx);
            }
            Op::GatherRows { table, ids } => {
                let t = self.value(*table);
                let mut dt = Matrix::zeros(t.rows(), t.cols());
                for (r, &id) in ids.iter().enumerate() {
                    for (o, v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::SliceCols { x, start } => {
                let src = self.value(*x);
                let mut dx = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    let mut dp = Matrix::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    accumulate(grads, p, dp);
                    offset += cols;
                }
            }
            Op::GroupMean { x, groups } => {
                let src = self.value(*x);
                let mut dx = Matrix::zeros(src.rows(), src.cols());
                for (gi, members) in groups.iter().enumerate() {
                    let inv = 1.0 / members.len() as f64;
                    for &m in members {
                        for (o, v) in dx.row_mut(m).iter_mut().zip(g.row(gi)) {
                            *o += v * inv;
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, b)| a * b).collect();
                accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::BceMean { probs, labels } => {
                let p = self.value(*probs);
                let scale = g.data()[0] / labels.len() as f64;
                let data = p
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&pv, &y)| {
                        if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&pv) {
                            0.0
                        } else {
                            scale * (-y / pv + (1.0 - y) / (1.0 - pv))
                        }
                    })
                    .collect();
                accumulate(grads, *probs, Matrix::from_vec(p.rows(), p.cols(), data).expect("shape"));
            }
            Op::SoftmaxXentMean { logits, targets, probs } => {
                let scale = g.data()[0] / targets.len() as f64;
                let mut dx = probs.scaled(scale);
                for (r, &t) in targets.iter().enumerate() {
                    let v = dx.get(r, t);
                    dx.set(r, t, v - scale);
                }
                accumulate(grads, *logits, dx);
            }
            Op::Combine(terms) => {
                for &(v, c) in terms {
                    accumulate(grads, v, Matrix::filled(1, 1, c * g.data()[0]));
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], var: Var, delta: Matrix) {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn gelu_derivative(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = libm::tanh(inner);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// `1 / (1 + exp(x))`, evaluated without overflow.
pub fn neg_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        let e = libm::exp(-x);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(x))
    }
}

/// Mean of `-y ln p - (1-y) ln(1-p)` with `p` clamped to `[1e-7, 1-1e-7]`.
pub fn binary_cross_entropy(probs: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -y * libm::log(p) - (1.0 - y) * libm::log(1.0 - p)
        })
        .sum();
    total / probs.len() as f64
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
    row.iter().map(|v| v - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Zero-filled adjoint placeholder with the given shape.
pub fn zeros_like(m: &Matrix) -> Matrix {
    Matrix::zeros(m.rows(), m.cols())
}
