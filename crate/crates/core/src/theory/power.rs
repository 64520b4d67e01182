use std::sync::Arc;

use crate::autodiff::{SparseMatrix, Tape};
use crate::error::Result;
use crate::graph::{all_pairs_distances, graph_power, h_hop_membership, Graph, UNREACHABLE};
use crate::pool::{coarsen_adjacency, induced_adjacency};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphPowerReport {
    pub p: usize,
    pub h: usize,
    /// Largest finite distance in the graph.
    pub diameter: usize,
    /// Largest original distance between two medoids joined by an edge when
    /// nodes are sampled from the power graph.
    pub topk_reach: usize,
    /// The same after ASAP coarsening over the power graph.
    pub asap_reach: usize,
}

impl GraphPowerReport {
    pub fn expected_topk(&self) -> usize {
        self.p.min(self.diameter)
    }

    pub fn expected_asap(&self) -> usize {
        (self.p + 2 * self.h).min(self.diameter)
    }

    pub fn pass(&self) -> bool {
        self.topk_reach == self.expected_topk() && self.asap_reach == self.expected_asap()
    }
}

fn reach(m: &SparseMatrix, dist: &[Vec<usize>]) -> usize {
    m.triplets().filter(|&(r, c, v)| r != c && v != 0.0).map(|(r, c, _)| dist[r][c]).max().unwrap_or(0)
}

/// Keeps every node as a medoid and measures how far apart two medoids can
/// be and still share a pooled edge. TopK samples the power graph `(A + I)^p`
/// directly; ASAP builds `h`-hop clusters on the original graph, weights
/// members uniformly, and coarsens the power graph with `Ŝᵀ(Â^p + I)Ŝ`.
pub fn verify_graph_power(g: &Graph, p: usize, h: usize) -> Result<GraphPowerReport> {
    let n = g.n_nodes();
    let dist = all_pairs_distances(g.adjacency().pattern());
    let diameter = dist.iter().flatten().filter(|&&d| d != UNREACHABLE).copied().max().unwrap_or(0);
    let power = graph_power(g.adjacency(), p)?;

    let members = h_hop_membership(g.adjacency(), h)?;
    let sizes = members.row_sums();
    let pattern = members.pattern().transpose().0;
    let weights: Vec<f64> = pattern.coords().map(|(_, medoid)| 1.0 / sizes[medoid]).collect();
    let s_hat = SparseMatrix::new(Arc::new(pattern), weights)?;

    let mut t = Tape::new();
    let a = t.sparse_constant(&power);
    let s = t.sparse_constant(&s_hat);
    let all: Vec<usize> = (0..n).collect();
    let topk = induced_adjacency(&mut t, &a, &all)?;
    let asap = coarsen_adjacency(&mut t, &s, &a)?;
    Ok(GraphPowerReport {
        p,
        h,
        diameter,
        topk_reach: reach(&t.sparse_value(&topk), &dist),
        asap_reach: reach(&t.sparse_value(&asap), &dist),
    })
}
