//! The ASAP pooling operator.
//!
//! Every node is the medoid of its own h-hop cluster. Members are weighted by
//! attention, clusters are scored, the best `⌈kN⌉` per graph survive, and the
//! pooled adjacency is `Ŝᵀ(A + I)Ŝ` with its diagonal removed.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Activation, SparseMatrix, SparseVar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{reach_pattern, Graph};
use crate::layers::{
    attention_scores, basic_leconv_forward, gcn_forward, leconv_forward, normalize_gcn_var, AttentionKind,
    AttentionParams, GcnParams, LeConvParams, ParamGroup,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitnessKind {
    Gcn,
    BasicLeConv,
    LeConv,
}

impl FitnessKind {
    pub const ALL: [FitnessKind; 3] = [FitnessKind::Gcn, FitnessKind::BasicLeConv, FitnessKind::LeConv];
}

impl fmt::Display for FitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitnessKind::Gcn => "gcn",
            FitnessKind::BasicLeConv => "basic-leconv",
            FitnessKind::LeConv => "leconv",
        })
    }
}

impl FromStr for FitnessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "gcn" => Ok(FitnessKind::Gcn),
            "basic-leconv" | "basicleconv" => Ok(FitnessKind::BasicLeConv),
            "leconv" => Ok(FitnessKind::LeConv),
            _ => Err(Error::InvalidArgument(format!("unknown fitness kind {s:?} (gcn, basic-leconv, leconv)"))),
        }
    }
}

/// Which features feed the pooled nodes and the fitness scorer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggregationMode {
    /// Medoid features for both, as in TopK-style pooling.
    None,
    /// Cluster features for the pooled nodes, medoid features for scoring.
    OnlyCluster,
    /// Cluster features for both.
    Both,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [AggregationMode::None, AggregationMode::OnlyCluster, AggregationMode::Both];
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::None => "none",
            AggregationMode::OnlyCluster => "only-cluster",
            AggregationMode::Both => "both",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(AggregationMode::None),
            "only-cluster" | "onlycluster" | "cluster" => Ok(AggregationMode::OnlyCluster),
            "both" => Ok(AggregationMode::Both),
            _ => Err(Error::InvalidArgument(format!("unknown aggregation mode {s:?} (none, only-cluster, both)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolConfig {
    pub k: f64,
    pub h: usize,
    pub attention: AttentionKind,
    pub fitness: FitnessKind,
    pub aggregation: AggregationMode,
    pub soft_edges: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            k: 0.5,
            h: 1,
            attention: AttentionKind::M2T,
            fitness: FitnessKind::LeConv,
            aggregation: AggregationMode::Both,
            soft_edges: true,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(Error::InvalidArgument(format!("pooling ratio k must lie in (0, 1], got {}", self.k)));
        }
        if self.h < 1 {
            return Err(Error::InvalidArgument(format!("cluster radius h must be >= 1, got {}", self.h)));
        }
        Ok(())
    }

    /// Attention is skipped when neither the features nor the edges use it.
    pub fn uses_attention(&self) -> bool {
        self.aggregation != AggregationMode::None || self.soft_edges
    }
}

/// Number of clusters kept from a graph of `n` nodes.
pub fn pooled_size(k: f64, n: usize) -> usize {
    // the tolerance keeps e.g. 0.1 * 30 from rounding up to 4
    let raw = (k * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitnessParams<P = Tensor> {
    Gcn(GcnParams<P>),
    BasicLeConv(GcnParams<P>),
    LeConv(LeConvParams<P>),
}

impl FitnessParams {
    pub fn init<R: Rng>(rng: &mut R, kind: FitnessKind, d: usize) -> Self {
        match kind {
            FitnessKind::Gcn => FitnessParams::Gcn(GcnParams::init(rng, d, 1)),
            FitnessKind::BasicLeConv => FitnessParams::BasicLeConv(GcnParams::init(rng, d, 1)),
            FitnessKind::LeConv => FitnessParams::LeConv(LeConvParams::init(rng, d, 1)),
        }
    }

    pub fn bind(&self, t: &mut Tape) -> FitnessParams<Var> {
        match self {
            FitnessParams::Gcn(p) => FitnessParams::Gcn(p.bind(t)),
            FitnessParams::BasicLeConv(p) => FitnessParams::BasicLeConv(p.bind(t)),
            FitnessParams::LeConv(p) => FitnessParams::LeConv(p.bind(t)),
        }
    }
}

impl<P> ParamGroup<P> for FitnessParams<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        match self {
            FitnessParams::Gcn(p) | FitnessParams::BasicLeConv(p) => p.visit(prefix, f),
            FitnessParams::LeConv(p) => p.visit(prefix, f),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        match self {
            FitnessParams::Gcn(p) | FitnessParams::BasicLeConv(p) => p.visit_mut(prefix, f),
            FitnessParams::LeConv(p) => p.visit_mut(prefix, f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolParams<P = Tensor> {
    pub attention: AttentionParams<P>,
    /// GCN producing the `X'` seen by the attention.
    pub query: GcnParams<P>,
    pub fitness: FitnessParams<P>,
}

impl PoolParams {
    pub fn init<R: Rng>(rng: &mut R, config: &PoolConfig, d: usize) -> Self {
        PoolParams {
            attention: AttentionParams::init(rng, config.attention, d),
            query: GcnParams::init(rng, d, d),
            fitness: FitnessParams::init(rng, config.fitness, d),
        }
    }

    pub fn bind(&self, t: &mut Tape) -> PoolParams<Var> {
        PoolParams { attention: self.attention.bind(t), query: self.query.bind(t), fitness: self.fitness.bind(t) }
    }
}

impl<P> ParamGroup<P> for PoolParams<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        self.attention.visit(&format!("{prefix}.attention"), f);
        self.query.visit(&format!("{prefix}.query"), f);
        self.fitness.visit(&format!("{prefix}.fitness"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        self.attention.visit_mut(&format!("{prefix}.attention"), f);
        self.query.visit_mut(&format!("{prefix}.query"), f);
        self.fitness.visit_mut(&format!("{prefix}.fitness"), f);
    }
}

/// Soft cluster membership on the tape.
#[derive(Clone, Debug)]
pub struct ClusterAssignment {
    /// `N x N`, rows are nodes and columns are clusters; each column sums to 1.
    pub s: SparseVar,
    /// Cluster-major view of the same weights: row `i` holds cluster `i`.
    pub by_cluster: SparseVar,
}

/// Cluster features `X^c` and memberships.
///
/// Attention runs on `X' = relu(GCN(X))`; the cluster representation is the
/// attention-weighted sum of the raw member features.
pub fn form_clusters(
    t: &mut Tape,
    x: Var,
    a: &SparseVar,
    h: usize,
    attention: &AttentionParams<Var>,
    query: &GcnParams<Var>,
) -> Result<(Var, ClusterAssignment)> {
    if h < 1 {
        return Err(Error::InvalidArgument(format!("cluster radius h must be >= 1, got {h}")));
    }
    let members = Arc::new(reach_pattern(&a.pattern, h)?);
    let a_norm = normalize_gcn_var(t, a)?;
    let transformed = gcn_forward(t, x, &a_norm, query, Activation::Relu)?;
    let scores = attention_scores(t, transformed, &members, attention)?;
    let alpha = t.segment_softmax(scores, members.rows(), members.n_rows())?;
    let by_cluster = SparseVar { pattern: members, values: alpha };
    let xc = t.spmm(&by_cluster, x)?;
    let s = t.sparse_transpose(&by_cluster)?;
    Ok((xc, ClusterAssignment { s, by_cluster }))
}

/// Fitness `Φ ∈ (0, 1)^N` of every cluster.
pub fn score_clusters(t: &mut Tape, x: Var, a: &SparseVar, params: &FitnessParams<Var>) -> Result<Var> {
    match params {
        FitnessParams::Gcn(p) => {
            let a_norm = normalize_gcn_var(t, a)?;
            gcn_forward(t, x, &a_norm, p, Activation::Sigmoid)
        }
        FitnessParams::BasicLeConv(p) => basic_leconv_forward(t, x, a, p.w, Activation::Sigmoid),
        FitnessParams::LeConv(p) => leconv_forward(t, x, a, p, Activation::Sigmoid),
    }
}

/// Indices of the kept clusters, graph by graph, best first within a graph.
/// Ties go to the lower index.
pub fn select_top(fitness: &[f64], counts: &[usize], k: f64) -> Result<Vec<usize>> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidArgument(format!("pooling ratio k must lie in (0, 1], got {k}")));
    }
    let total: usize = counts.iter().sum();
    if total != fitness.len() {
        return Err(Error::shape("select_top", format!("{} scores for {total} nodes", fitness.len())));
    }
    if let Some(i) = fitness.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("fitness of node {i} is not finite")));
    }
    let mut selected = Vec::new();
    let mut offset = 0;
    for &n in counts {
        let mut order: Vec<usize> = (offset..offset + n).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        selected.extend_from_slice(&order[..pooled_size(k, n)]);
        offset += n;
    }
    Ok(selected)
}

/// Columns `selected` of the node-by-cluster matrix `s`.
pub fn slice_clusters(t: &mut Tape, s: &SparseVar, selected: &[usize]) -> Result<SparseVar> {
    let mut position = vec![None; s.n_cols()];
    for (p, &c) in selected.iter().enumerate() {
        position[c] = Some(p);
    }
    let (pattern, src) = s.pattern.filter_map(s.n_rows(), selected.len(), Some, |c| position[c], |_, _| true);
    let values = t.gather_rows(s.values, &src)?;
    Ok(SparseVar { pattern: Arc::new(pattern), values })
}

fn drop_diagonal(t: &mut Tape, m: &SparseVar) -> Result<SparseVar> {
    let (pattern, src) = m.pattern.filter_map(m.n_rows(), m.n_cols(), Some, Some, |r, c| r != c);
    let values = t.gather_rows(m.values, &src)?;
    Ok(SparseVar { pattern: Arc::new(pattern), values })
}

/// `Ŝᵀ (A + I) Ŝ` with the diagonal removed.
pub fn coarsen_adjacency(t: &mut Tape, s_hat: &SparseVar, a: &SparseVar) -> Result<SparseVar> {
    if s_hat.n_rows() != a.n_rows() {
        return Err(Error::shape("coarsen", format!("{} assignment rows for {} nodes", s_hat.n_rows(), a.n_rows())));
    }
    let st = t.sparse_transpose(s_hat)?;
    let a_hat = t.sparse_add_identity(a)?;
    let left = t.sparse_product(&st, &a_hat)?;
    let full = t.sparse_product(&left, s_hat)?;
    drop_diagonal(t, &full)
}

/// Adjacency restricted to the selected nodes, without self-loops.
pub fn induced_adjacency(t: &mut Tape, a: &SparseVar, selected: &[usize]) -> Result<SparseVar> {
    let mut position = vec![None; a.n_rows()];
    for (p, &c) in selected.iter().enumerate() {
        position[c] = Some(p);
    }
    let k = selected.len();
    let (pattern, src) = a.pattern.filter_map(k, k, |r| position[r], |c| position[c], |r, c| r != c);
    let values = t.gather_rows(a.values, &src)?;
    Ok(SparseVar { pattern: Arc::new(pattern), values })
}

/// Pooled graph still attached to the tape.
#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub x: Var,
    pub adjacency: SparseVar,
    /// `Ŝ`, present when attention ran.
    pub assignment: Option<SparseVar>,
    pub fitness: Var,
    pub selected: Vec<usize>,
    pub segment: Vec<usize>,
    pub counts: Vec<usize>,
}

impl PoolOutput {
    pub fn detach(&self, t: &Tape) -> PooledGraph {
        PooledGraph {
            x: t.value(self.x).clone(),
            adjacency: t.sparse_value(&self.adjacency),
            assignment: self.assignment.as_ref().map(|s| t.sparse_value(s)),
            fitness: t.value(self.fitness).clone(),
            selected: self.selected.clone(),
        }
    }
}

/// Plain-value result of pooling one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledGraph {
    pub x: Tensor,
    pub adjacency: SparseMatrix,
    pub assignment: Option<SparseMatrix>,
    pub fitness: Tensor,
    pub selected: Vec<usize>,
}

/// Pools a (possibly batched) graph. `segment` maps nodes to graphs and
/// `counts` gives the node count of each graph.
pub fn asap_pool(
    t: &mut Tape,
    x: Var,
    a: &SparseVar,
    segment: &[usize],
    counts: &[usize],
    params: &PoolParams<Var>,
    config: &PoolConfig,
) -> Result<PoolOutput> {
    config.validate()?;
    let clusters = if config.uses_attention() {
        Some(form_clusters(t, x, a, config.h, &params.attention, &params.query)?)
    } else {
        None
    };
    let (features, scored) = match (&clusters, config.aggregation) {
        (Some((xc, _)), AggregationMode::Both) => (*xc, *xc),
        (Some((xc, _)), AggregationMode::OnlyCluster) => (*xc, x),
        _ => (x, x),
    };
    let fitness = score_clusters(t, scored, a, &params.fitness)?;
    let selected = select_top(t.value(fitness).data(), counts, config.k)?;
    let gated = t.hadamard(fitness, features)?;
    let pooled_x = t.gather_rows(gated, &selected)?;

    let (adjacency, assignment) = match (&clusters, config.soft_edges) {
        (Some((_, assign)), true) => {
            let s_hat = slice_clusters(t, &assign.s, &selected)?;
            (coarsen_adjacency(t, &s_hat, a)?, Some(s_hat))
        }
        (Some((_, assign)), false) => {
            (induced_adjacency(t, a, &selected)?, Some(slice_clusters(t, &assign.s, &selected)?))
        }
        (None, _) => (induced_adjacency(t, a, &selected)?, None),
    };

    let mut new_counts = vec![0; counts.len()];
    let new_segment: Vec<usize> = selected.iter().map(|&i| segment[i]).collect();
    for &g in &new_segment {
        new_counts[g] += 1;
    }
    Ok(PoolOutput { x: pooled_x, adjacency, assignment, fitness, selected, segment: new_segment, counts: new_counts })
}

/// Pools a single graph with stored parameters, outside any training loop.
pub fn pool_graph(g: &Graph, params: &PoolParams, config: &PoolConfig) -> Result<PooledGraph> {
    let mut t = Tape::new();
    let x = t.constant(g.features().clone());
    let a = t.sparse_constant(g.adjacency());
    let bound = params.bind(&mut t);
    let segment = vec![0; g.n_nodes()];
    let out = asap_pool(&mut t, x, &a, &segment, &[g.n_nodes()], &bound, config)?;
    Ok(out.detach(&t))
}
