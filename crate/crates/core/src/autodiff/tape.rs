//! Reverse-mode differentiation over dense tensors and sparse-matrix values.
//!
//! Every operation appends a node to the [`Tape`]; [`Tape::backward`] walks the
//! nodes in reverse insertion order, which is a valid topological order
//! because operands always precede their results.

use std::collections::HashMap;
use std::sync::Arc;

use super::sparse::{SparseMatrix, SparsePattern};
use super::tensor::{gemm, Operand, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse matrix whose values are an `nnz x 1` tensor on the tape.
#[derive(Clone, Debug)]
pub struct SparseVar {
    pub pattern: Arc<SparsePattern>,
    pub values: Var,
}

impl SparseVar {
    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols()
    }
}

/// Pointwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    /// Slope used by the attention scorers.
    pub const LEAKY: Activation = Activation::LeakyRelu(0.2);

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Operations reachable through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Max,
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Hadamard,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Spmm { pattern: Arc<SparsePattern>, values: Var, dense: Var },
    SparseProduct { a: Var, b: Var, terms: Arc<Vec<(usize, usize, usize)>> },
    Binary { kind: Binary, a: Var, b: Var },
    Unary { act: Activation, x: Var },
    Powf { x: Var, exponent: f64 },
    Scale { x: Var, factor: f64 },
    Gather { x: Var, index: Arc<Vec<Option<usize>>> },
    ConcatCols(Var, Var),
    SegmentSoftmax { x: Var, seg: Arc<Vec<usize>> },
    SegmentSum { x: Var, seg: Arc<Vec<usize>> },
    SegmentMean { x: Var, seg: Arc<Vec<usize>>, counts: Vec<f64> },
    SegmentMax { x: Var, argmax: Vec<usize> },
    Sum(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    is_param: bool,
}

/// Gradients of leaves registered with `requires_grad`.
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.map.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.map.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Ordered record of executed operations. Confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    cleared: bool,
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

    fn check_live(&self) -> Result<()> {
        if self.cleared {
            Err(Error::TapeCleared)
        } else {
            Ok(())
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(
            matches!(op, Op::Leaf) || value.is_finite(),
            "non-finite value produced by tape op #{}",
            self.nodes.len()
        );
        self.nodes.push(Node { value, op, needs_grad, is_param: false });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a leaf; it receives a gradient iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let param = t.requires_grad;
        let v = self.push(t, Op::Leaf, param);
        self.nodes[v.0].is_param = param;
        v
    }

    pub fn param(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = true;
        self.leaf(t)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn sparse_constant(&mut self, m: &SparseMatrix) -> SparseVar {
        let values = self.constant(Tensor::column(m.values()));
        SparseVar { pattern: m.pattern().clone(), values }
    }

    pub fn sparse_param(&mut self, m: &SparseMatrix) -> SparseVar {
        let values = self.param(Tensor::column(m.values()));
        SparseVar { pattern: m.pattern().clone(), values }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn sparse_value(&self, s: &SparseVar) -> SparseMatrix {
        SparseMatrix::new(s.pattern.clone(), self.value(s.values).data().to_vec())
            .expect("sparse var values match its pattern")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Sparse-dense product; gradients reach both the dense operand and the sparse values.
    pub fn spmm(&mut self, s: &SparseVar, d: Var) -> Result<Var> {
        self.check_live()?;
        let (rows, cols) = self.shape(d);
        if s.n_cols() != rows {
            return Err(Error::shape("spmm", format!("{}x{} * {rows}x{cols}", s.n_rows(), s.n_cols())));
        }
        let vals = self.value(s.values).data();
        let dense = self.value(d);
        let mut out = Tensor::zeros(s.n_rows(), cols);
        for (k, (r, c)) in s.pattern.coords().enumerate() {
            let v = vals[k];
            let src = dense.row(c);
            for (o, x) in out.row_mut(r).iter_mut().zip(src) {
                *o += v * x;
            }
        }
        let ng = self.ng(s.values) || self.ng(d);
        Ok(self.push(out, Op::Spmm { pattern: s.pattern.clone(), values: s.values, dense: d }, ng))
    }

    /// Sparse-sparse product with differentiable values.
    pub fn sparse_product(&mut self, a: &SparseVar, b: &SparseVar) -> Result<SparseVar> {
        self.check_live()?;
        let (pattern, terms) = a.pattern.product(&b.pattern)?;
        let av = self.value(a.values).data();
        let bv = self.value(b.values).data();
        let mut out = vec![0.0; pattern.nnz()];
        for &(o, i, j) in &terms {
            out[o] += av[i] * bv[j];
        }
        let ng = self.ng(a.values) || self.ng(b.values);
        let values =
            self.push(Tensor::column(&out), Op::SparseProduct { a: a.values, b: b.values, terms: Arc::new(terms) }, ng);
        Ok(SparseVar { pattern: Arc::new(pattern), values })
    }

    pub fn sparse_transpose(&mut self, s: &SparseVar) -> Result<SparseVar> {
        let (pattern, src) = s.pattern.transpose();
        let values = self.gather_rows(s.values, &src)?;
        Ok(SparseVar { pattern: Arc::new(pattern), values })
    }

    /// `s + I`: diagonal entries gain 1 (created when absent).
    pub fn sparse_add_identity(&mut self, s: &SparseVar) -> Result<SparseVar> {
        let (pattern, src) = s.pattern.with_diagonal()?;
        let gathered = self.gather_rows_opt(s.values, src)?;
        let mut diag = Tensor::zeros(pattern.nnz(), 1);
        for (k, (r, c)) in pattern.coords().enumerate() {
            if r == c {
                diag.data_mut()[k] = 1.0;
            }
        }
        let diag = self.constant(diag);
        let values = self.add(gathered, diag)?;
        Ok(SparseVar { pattern: Arc::new(pattern), values })
    }

    /// Row sums as an `n_rows x 1` tensor.
    pub fn sparse_row_sums(&mut self, s: &SparseVar) -> Result<Var> {
        let rows = s.pattern.rows().to_vec();
        self.segment_reduce(Reduce::Sum, s.values, &rows, s.n_rows())
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br || !(ac == bc || ac == 1 || bc == 1) {
            return Err(Error::shape(
                "elementwise",
                format!("cannot broadcast {ar}x{ac} with {br}x{bc} (only per-row scalars broadcast)"),
            ));
        }
        let cols = ac.max(bc);
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Tensor::zeros(ar, cols);
        for r in 0..ar {
            for c in 0..cols {
                let x = av.get(r, if ac == 1 { 0 } else { c });
                let y = bv.get(r, if bc == 1 { 0 } else { c });
                out.set(
                    r,
                    c,
                    match kind {
                        Binary::Add => x + y,
                        Binary::Sub => x - y,
                        Binary::Hadamard => x * y,
                    },
                );
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Binary { kind, a, b }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    /// Hadamard product; an `n x 1` operand is broadcast across the other's columns.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Hadamard, a, b)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var> {
        self.check_live()?;
        if act == Activation::Identity {
            return Ok(x);
        }
        let mut out = self.value(x).clone();
        out.requires_grad = false;
        for v in out.data_mut() {
            *v = act.apply(*v);
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Unary { act, x }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::LEAKY)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    /// Dispatches one of the pointwise operations by kind.
    pub fn elementwise(&mut self, kind: Elementwise, operands: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Add | Elementwise::Sub | Elementwise::Hadamard => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(Error::InvalidArgument(format!("{kind:?} takes {arity} operand(s), got {}", operands.len())));
        }
        match kind {
            Elementwise::Add => self.add(operands[0], operands[1]),
            Elementwise::Sub => self.sub(operands[0], operands[1]),
            Elementwise::Hadamard => self.hadamard(operands[0], operands[1]),
            Elementwise::Relu => self.relu(operands[0]),
            Elementwise::LeakyRelu => self.leaky_relu(operands[0]),
            Elementwise::Sigmoid => self.sigmoid(operands[0]),
            Elementwise::Tanh => self.tanh(operands[0]),
        }
    }

    pub fn powf(&mut self, x: Var, exponent: f64) -> Result<Var> {
        self.check_live()?;
        let mut out = self.value(x).clone();
        out.requires_grad = false;
        for v in out.data_mut() {
            *v = v.powf(exponent);
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Powf { x, exponent }, ng))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.check_live()?;
        let mut out = self.value(x).clone();
        out.requires_grad = false;
        for v in out.data_mut() {
            *v *= factor;
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Scale { x, factor }, ng))
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        self.gather_rows_opt(x, index.iter().map(|&i| Some(i)).collect())
    }

    /// Row gather where `None` yields a zero row.
    pub fn gather_rows_opt(&mut self, x: Var, index: Vec<Option<usize>>) -> Result<Var> {
        self.check_live()?;
        let src = self.value(x);
        let mut out = Tensor::zeros(index.len(), src.cols());
        for (o, i) in index.iter().enumerate() {
            if let Some(i) = *i {
                if i >= src.rows() {
                    return Err(Error::shape("gather", format!("row {i} of a {}-row tensor", src.rows())));
                }
                out.row_mut(o).copy_from_slice(src.row(i));
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Gather { x, index: Arc::new(index) }, ng))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br {
            return Err(Error::shape("concat", format!("{ar} rows vs {br} rows")));
        }
        let mut out = Tensor::zeros(ar, ac + bc);
        for r in 0..ar {
            out.row_mut(r)[..ac].copy_from_slice(self.value(a).row(r));
            out.row_mut(r)[ac..].copy_from_slice(self.value(b).row(r));
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::ConcatCols(a, b), ng))
    }

    fn check_segments(
        op: &'static str,
        seg: &[usize],
        rows: usize,
        n_segments: usize,
        allow_empty: bool,
    ) -> Result<Vec<usize>> {
        if seg.len() != rows {
            return Err(Error::shape(op, format!("{} segment ids for {rows} rows", seg.len())));
        }
        let mut counts = vec![0usize; n_segments];
        for &s in seg {
            if s >= n_segments {
                return Err(Error::InvalidArgument(format!("segment id {s} >= {n_segments} in {op}")));
            }
            counts[s] += 1;
        }
        if !allow_empty {
            if let Some(s) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptySegment { op, segment: s });
            }
        }
        Ok(counts)
    }

    /// Softmax of an `n x 1` score vector within each segment.
    pub fn segment_softmax(&mut self, x: Var, seg: &[usize], n_segments: usize) -> Result<Var> {
        self.check_live()?;
        let (rows, cols) = self.shape(x);
        if cols != 1 {
            return Err(Error::shape("segment_softmax", format!("scores must be n x 1, got {rows}x{cols}")));
        }
        Self::check_segments("segment_softmax", seg, rows, n_segments, false)?;
        let xv = self.value(x).data();
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (i, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(xv[i]);
        }
        let mut out: Vec<f64> = seg.iter().enumerate().map(|(i, &s)| (xv[i] - max[s]).exp()).collect();
        let mut denom = vec![0.0; n_segments];
        for (i, &s) in seg.iter().enumerate() {
            denom[s] += out[i];
        }
        for (i, &s) in seg.iter().enumerate() {
            out[i] /= denom[s];
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::column(&out), Op::SegmentSoftmax { x, seg: Arc::new(seg.to_vec()) }, ng))
    }

    /// Per-segment, per-feature reduction of the rows of `x`.
    pub fn segment_reduce(&mut self, kind: Reduce, x: Var, seg: &[usize], n_segments: usize) -> Result<Var> {
        self.check_live()?;
        let (rows, cols) = self.shape(x);
        let op = match kind {
            Reduce::Max => "segment_max",
            Reduce::Mean => "segment_mean",
            Reduce::Sum => "segment_sum",
        };
        let counts = Self::check_segments(op, seg, rows, n_segments, kind == Reduce::Sum)?;
        let xv = self.value(x);
        let mut out = Tensor::zeros(n_segments, cols);
        let ng = self.ng(x);
        match kind {
            Reduce::Sum | Reduce::Mean => {
                for (i, &s) in seg.iter().enumerate() {
                    for (o, v) in out.row_mut(s).iter_mut().zip(xv.row(i)) {
                        *o += v;
                    }
                }
                if kind == Reduce::Sum {
                    return Ok(self.push(out, Op::SegmentSum { x, seg: Arc::new(seg.to_vec()) }, ng));
                }
                let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                for (s, &c) in counts.iter().enumerate() {
                    for o in out.row_mut(s) {
                        *o /= c;
                    }
                }
                Ok(self.push(out, Op::SegmentMean { x, seg: Arc::new(seg.to_vec()), counts }, ng))
            }
            Reduce::Max => {
                let mut argmax = vec![usize::MAX; n_segments * cols];
                for (i, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        let slot = s * cols + c;
                        // strict comparison keeps the lowest row index on ties
                        if argmax[slot] == usize::MAX || xv.get(i, c) > xv.get(argmax[slot], c) {
                            argmax[slot] = i;
                        }
                    }
                }
                for s in 0..n_segments {
                    for c in 0..cols {
                        out.set(s, c, xv.get(argmax[s * cols + c], c));
                    }
                }
                Ok(self.push(out, Op::SegmentMax { x, argmax }, ng))
            }
        }
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let total = self.value(x).sum();
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(total), Op::Sum(x), ng))
    }

    /// Mean negative log-softmax of the true class per row.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_live()?;
        let (rows, cols) = self.shape(logits);
        if labels.len() != rows {
            return Err(Error::shape("cross_entropy", format!("{} labels for {rows} rows", labels.len())));
        }
        if rows == 0 {
            return Err(Error::InvalidArgument("cross_entropy on an empty batch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {cols} classes")));
        }
        let lv = self.value(logits);
        let mut probs = Tensor::zeros(rows, cols);
        let mut loss = 0.0;
        for r in 0..rows {
            let row = lv.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[labels[r]];
            for c in 0..cols {
                probs.set(r, c, (row[c] - lse).exp());
            }
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss / rows as f64),
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            ng,
        ))
    }

    /// Propagates d(loss)/d(node) back to every parameter leaf, then clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check_live()?;
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss { rows: r, cols: c });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
        }

        let mut map = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_param {
                let g = grads[i].take().unwrap_or_else(|| Tensor::zeros(node.value.rows(), node.value.cols()));
                map.insert(Var(i), g);
            }
        }
        self.nodes.clear();
        self.cleared = true;
        Ok(Gradients { map })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        let val = |v: Var| &nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };

        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).shape();
                let n = val(*b).cols();
                if wants(*a) {
                    // dA = G * B^T
                    let mut da = Tensor::zeros(m, k);
                    gemm(Operand::plain(g), Operand::t(val(*b)), &mut da);
                    acc(*a, da);
                }
                if wants(*b) {
                    // dB = A^T * G
                    let mut db = Tensor::zeros(k, n);
                    gemm(Operand::t(val(*a)), Operand::plain(g), &mut db);
                    acc(*b, db);
                }
            }
            Op::Spmm { pattern, values, dense } => {
                let d = val(*dense);
                if wants(*values) {
                    let mut dv = Tensor::zeros(pattern.nnz(), 1);
                    for (k, (r, c)) in pattern.coords().enumerate() {
                        dv.data_mut()[k] = g.row(r).iter().zip(d.row(c)).map(|(x, y)| x * y).sum();
                    }
                    acc(*values, dv);
                }
                if wants(*dense) {
                    let sv = val(*values).data();
                    let mut dd = Tensor::zeros(d.rows(), d.cols());
                    for (k, (r, c)) in pattern.coords().enumerate() {
                        let v = sv[k];
                        for (o, x) in dd.row_mut(c).iter_mut().zip(g.row(r)) {
                            *o += v * x;
                        }
                    }
                    acc(*dense, dd);
                }
            }
            Op::SparseProduct { a, b, terms } => {
                let av = val(*a).data();
                let bv = val(*b).data();
                let gv = g.data();
                if wants(*a) {
                    let mut da = Tensor::zeros(av.len(), 1);
                    for &(o, i, j) in terms.iter() {
                        da.data_mut()[i] += gv[o] * bv[j];
                    }
                    acc(*a, da);
                }
                if wants(*b) {
                    let mut db = Tensor::zeros(bv.len(), 1);
                    for &(o, i, j) in terms.iter() {
                        db.data_mut()[j] += gv[o] * av[i];
                    }
                    acc(*b, db);
                }
            }
            Op::Binary { kind, a, b } => {
                let (rows, cols) = g.shape();
                for (this, other, is_lhs) in [(*a, *b, true), (*b, *a, false)] {
                    if !wants(this) {
                        continue;
                    }
                    let tv = val(this);
                    let ov = val(other);
                    let bcast_self = tv.cols() == 1 && cols > 1;
                    let mut d = Tensor::zeros(tv.rows(), tv.cols());
                    for r in 0..rows {
                        for c in 0..cols {
                            let gi = g.get(r, c);
                            let local = match kind {
                                Binary::Add => gi,
                                Binary::Sub => {
                                    if is_lhs {
                                        gi
                                    } else {
                                        -gi
                                    }
                                }
                                Binary::Hadamard => gi * ov.get(r, if ov.cols() == 1 { 0 } else { c }),
                            };
                            let tc = if bcast_self { 0 } else { c };
                            d.set(r, tc, d.get(r, tc) + local);
                        }
                    }
                    acc(this, d);
                }
            }
            Op::Unary { act, x } => {
                let xv = val(*x);
                let yv = &nodes[idx].value;
                let mut d = g.clone();
                for ((o, xi), yi) in d.data_mut().iter_mut().zip(xv.data()).zip(yv.data()) {
                    *o *= act.derivative(*xi, *yi);
                }
                acc(*x, d);
            }
            Op::Powf { x, exponent } => {
                let xv = val(*x);
                let mut d = g.clone();
                for (o, xi) in d.data_mut().iter_mut().zip(xv.data()) {
                    *o *= exponent * xi.powf(exponent - 1.0);
                }
                acc(*x, d);
            }
            Op::Scale { x, factor } => {
                let mut d = g.clone();
                for o in d.data_mut() {
                    *o *= factor;
                }
                acc(*x, d);
            }
            Op::Gather { x, index } => {
                let xv = val(*x);
                let mut d = Tensor::zeros(xv.rows(), xv.cols());
                for (o, i) in index.iter().enumerate() {
                    if let Some(i) = *i {
                        for (t, s) in d.row_mut(i).iter_mut().zip(g.row(o)) {
                            *t += s;
                        }
                    }
                }
                acc(*x, d);
            }
            Op::ConcatCols(a, b) => {
                let ac = val(*a).cols();
                let rows = g.rows();
                if wants(*a) {
                    let mut d = Tensor::zeros(rows, ac);
                    for r in 0..rows {
                        d.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    }
                    acc(*a, d);
                }
                if wants(*b) {
                    let bc = val(*b).cols();
                    let mut d = Tensor::zeros(rows, bc);
                    for r in 0..rows {
                        d.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                    }
                    acc(*b, d);
                }
            }
            Op::SegmentSoftmax { x, seg } => {
                let y = nodes[idx].value.data();
                let gv = g.data();
                let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg];
                for (i, &s) in seg.iter().enumerate() {
                    dot[s] += gv[i] * y[i];
                }
                let d: Vec<f64> = seg.iter().enumerate().map(|(i, &s)| y[i] * (gv[i] - dot[s])).collect();
                acc(*x, Tensor::column(&d));
            }
            Op::SegmentSum { x, seg } => {
                let mut d = Tensor::zeros(seg.len(), g.cols());
                for (i, &s) in seg.iter().enumerate() {
                    d.row_mut(i).copy_from_slice(g.row(s));
                }
                acc(*x, d);
            }
            Op::SegmentMean { x, seg, counts } => {
                let mut d = Tensor::zeros(seg.len(), g.cols());
                for (i, &s) in seg.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(s)) {
                        *o = v / counts[s];
                    }
                }
                acc(*x, d);
            }
            Op::SegmentMax { x, argmax } => {
                let xv = val(*x);
                let cols = xv.cols();
                let mut d = Tensor::zeros(xv.rows(), cols);
                for (slot, &src) in argmax.iter().enumerate() {
                    let (s, c) = (slot / cols, slot % cols);
                    d.set(src, c, d.get(src, c) + g.get(s, c));
                }
                acc(*x, d);
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                acc(*x, Tensor::filled(r, c, g.item()));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let n = labels.len() as f64;
                let mut d = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    d.set(r, l, d.get(r, l) - 1.0);
                }
                for o in d.data_mut() {
                    *o *= g.item() / n;
                }
                acc(*logits, d);
            }
        }
    }
}
