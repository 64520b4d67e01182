//! Differentiable graph layers: GCN, LEConv and the cluster attention scorers.
//!
//! Parameter groups are generic over their slot type. With `Tensor` slots they
//! are stored weights; [`bind`](GcnParams::bind) puts them on a tape and
//! returns the same group with `Var` slots.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Activation, Reduce, SparsePattern, SparseVar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Glorot-uniform initialisation.
pub fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

/// Visits every slot of a parameter group with a stable dotted name.
pub trait ParamGroup<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P));
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams<P = Tensor> {
    pub w: P,
}

impl GcnParams {
    pub fn init<R: Rng>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        GcnParams { w: glorot(rng, d_in, d_out) }
    }

    pub fn bind(&self, t: &mut Tape) -> GcnParams<Var> {
        GcnParams { w: t.param(self.w.clone()) }
    }
}

impl<P> ParamGroup<P> for GcnParams<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(join(prefix, "w"), &self.w);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        f(join(prefix, "w"), &mut self.w);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeConvParams<P = Tensor> {
    pub w1: P,
    pub w2: P,
    pub w3: P,
}

impl LeConvParams {
    pub fn init<R: Rng>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        LeConvParams { w1: glorot(rng, d_in, d_out), w2: glorot(rng, d_in, d_out), w3: glorot(rng, d_in, d_out) }
    }

    pub fn bind(&self, t: &mut Tape) -> LeConvParams<Var> {
        LeConvParams { w1: t.param(self.w1.clone()), w2: t.param(self.w2.clone()), w3: t.param(self.w3.clone()) }
    }
}

impl<P> ParamGroup<P> for LeConvParams<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(join(prefix, "w1"), &self.w1);
        f(join(prefix, "w2"), &self.w2);
        f(join(prefix, "w3"), &self.w3);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        f(join(prefix, "w1"), &mut self.w1);
        f(join(prefix, "w2"), &mut self.w2);
        f(join(prefix, "w3"), &mut self.w3);
    }
}

/// Which query the cluster attention uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    /// Query is the medoid's own representation.
    T2T,
    /// No query; each member is scored on its own.
    S2T,
    /// Query is the element-wise max over the cluster members.
    M2T,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 3] = [AttentionKind::T2T, AttentionKind::S2T, AttentionKind::M2T];

    /// Length of the scoring vector for hidden width `d`.
    pub fn vector_len(self, d: usize) -> usize {
        match self {
            AttentionKind::S2T => d,
            AttentionKind::T2T | AttentionKind::M2T => 2 * d,
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::T2T => "T2T",
            AttentionKind::S2T => "S2T",
            AttentionKind::M2T => "M2T",
        })
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T2T" => Ok(AttentionKind::T2T),
            "S2T" => Ok(AttentionKind::S2T),
            "M2T" => Ok(AttentionKind::M2T),
            _ => Err(Error::InvalidArgument(format!("unknown attention kind {s:?} (T2T, S2T, M2T)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<P = Tensor> {
    pub kind: AttentionKind,
    /// `d x d` projection of the query.
    pub w_mat: P,
    /// Scoring vector, `2d x 1` for T2T/M2T and `d x 1` for S2T.
    pub w_vec: P,
}

impl AttentionParams {
    pub fn init<R: Rng>(rng: &mut R, kind: AttentionKind, d: usize) -> Self {
        AttentionParams { kind, w_mat: glorot(rng, d, d), w_vec: glorot(rng, kind.vector_len(d), 1) }
    }

    pub fn bind(&self, t: &mut Tape) -> AttentionParams<Var> {
        AttentionParams { kind: self.kind, w_mat: t.param(self.w_mat.clone()), w_vec: t.param(self.w_vec.clone()) }
    }
}

impl<P> ParamGroup<P> for AttentionParams<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(join(prefix, "w_mat"), &self.w_mat);
        f(join(prefix, "w_vec"), &self.w_vec);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        f(join(prefix, "w_mat"), &mut self.w_mat);
        f(join(prefix, "w_vec"), &mut self.w_vec);
    }
}

/// `D̂^-1/2 (A + I) D̂^-1/2` with gradients flowing into the values of `a`.
pub fn normalize_gcn_var(t: &mut Tape, a: &SparseVar) -> Result<SparseVar> {
    let hat = t.sparse_add_identity(a)?;
    let deg = t.sparse_row_sums(&hat)?;
    let dinv = t.powf(deg, -0.5)?;
    let left = t.gather_rows(dinv, hat.pattern.rows())?;
    let right = t.gather_rows(dinv, hat.pattern.cols())?;
    let scale = t.hadamard(left, right)?;
    let values = t.hadamard(hat.values, scale)?;
    Ok(SparseVar { pattern: hat.pattern, values })
}

fn check_rows(t: &Tape, op: &'static str, x: Var, a: &SparseVar) -> Result<()> {
    let (rows, _) = t.shape(x);
    if a.n_rows() != rows || a.n_cols() != rows {
        return Err(Error::shape(op, format!("{}x{} adjacency for {rows} feature rows", a.n_rows(), a.n_cols())));
    }
    Ok(())
}

/// `act(Â_norm · X · W)`.
pub fn gcn_forward(t: &mut Tape, x: Var, a_norm: &SparseVar, params: &GcnParams<Var>, act: Activation) -> Result<Var> {
    check_rows(t, "gcn", x, a_norm)?;
    let xw = t.matmul(x, params.w)?;
    let h = t.spmm(a_norm, xw)?;
    t.activation(h, act)
}

/// Row `i` is `act(x_i W1 + Σ_j A_ij (x_i W2 − x_j W3))` over the raw adjacency.
pub fn leconv_forward(t: &mut Tape, x: Var, a: &SparseVar, params: &LeConvParams<Var>, act: Activation) -> Result<Var> {
    check_rows(t, "leconv", x, a)?;
    let self_term = t.matmul(x, params.w1)?;
    let deg = t.sparse_row_sums(a)?;
    let xw2 = t.matmul(x, params.w2)?;
    let centre = t.hadamard(deg, xw2)?;
    let xw3 = t.matmul(x, params.w3)?;
    let neigh = t.spmm(a, xw3)?;
    let diff = t.sub(centre, neigh)?;
    let phi = t.add(self_term, diff)?;
    t.activation(phi, act)
}

/// LEConv with one matrix shared by all three terms.
pub fn basic_leconv_forward(t: &mut Tape, x: Var, a: &SparseVar, w: Var, act: Activation) -> Result<Var> {
    leconv_forward(t, x, a, &LeConvParams { w1: w, w2: w, w3: w }, act)
}

/// Raw attention score of every (cluster, member) entry of `clusters`.
///
/// `candidates` holds the GCN-transformed node features `X'`. Row `i` of
/// `clusters` lists the members of the cluster centred on node `i`; the
/// returned `nnz x 1` scores follow the pattern's entry order.
pub fn attention_scores(
    t: &mut Tape,
    candidates: Var,
    clusters: &SparsePattern,
    params: &AttentionParams<Var>,
) -> Result<Var> {
    let (n, d) = t.shape(candidates);
    if clusters.n_rows() != n || clusters.n_cols() != n {
        return Err(Error::shape(
            "attention",
            format!("{}x{} cluster pattern for {n} candidates", clusters.n_rows(), clusters.n_cols()),
        ));
    }
    let expected = params.kind.vector_len(d);
    if t.shape(params.w_vec) != (expected, 1) {
        let (r, c) = t.shape(params.w_vec);
        return Err(Error::shape(
            "attention",
            format!("{} needs a {expected}x1 scoring vector, got {r}x{c}", params.kind),
        ));
    }
    // The score is linear before the activation, so each half of the scoring
    // vector is applied per node and only scalars are gathered per entry.
    let raw = match params.kind {
        AttentionKind::S2T => {
            let w = t.matmul(params.w_mat, params.w_vec)?;
            let per_node = t.matmul(candidates, w)?;
            t.gather_rows(per_node, clusters.cols())?
        }
        AttentionKind::T2T | AttentionKind::M2T => {
            let query = if params.kind == AttentionKind::T2T {
                candidates
            } else {
                let members = t.gather_rows(candidates, clusters.cols())?;
                t.segment_reduce(Reduce::Max, members, clusters.rows(), n)?
            };
            let head: Vec<usize> = (0..d).collect();
            let tail: Vec<usize> = (d..2 * d).collect();
            let w_query = t.gather_rows(params.w_vec, &head)?;
            let w_member = t.gather_rows(params.w_vec, &tail)?;
            let projected = t.matmul(query, params.w_mat)?;
            let query_score = t.matmul(projected, w_query)?;
            let member_score = t.matmul(candidates, w_member)?;
            let q = t.gather_rows(query_score, clusters.rows())?;
            let m = t.gather_rows(member_score, clusters.cols())?;
            t.add(q, m)?
        }
    };
    t.activation(raw, Activation::LEAKY)
}
