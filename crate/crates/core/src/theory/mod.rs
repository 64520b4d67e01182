//! Exhaustive checks of the connectivity and equivariance claims behind
//! ASAP: optimum node counts, minimum sampling ratios, tree enumeration,
//! graph powers and permutation equivariance.

mod equivariance;
mod power;
mod trees;

use std::fmt;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{all_pairs_distances, Graph, UNREACHABLE};

pub use equivariance::{
    relabeling_error, tie_counterexample, verify_equivariance, EquivarianceReport, TieCounterexample,
};
pub use power::{verify_graph_power, GraphPowerReport};
pub use trees::{canonical_tree, non_isomorphic_trees, verify_tree_theorem, ConnectivityReport, PathRow, TreeRow};

pub const MAX_OPTIMUM_NODES: usize = 20;
pub const MAX_SAMPLING_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Path,
    BalancedStarlike,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Path => "path",
            Family::BalancedStarlike => "balanced_starlike",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimumNodesResult {
    pub n_nodes: usize,
    pub h: usize,
    pub n_star: usize,
    pub witness: Vec<usize>,
}

/// A sampling ratio `m / n`, kept unreduced so `m` stays visible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub m: usize,
    pub n: usize,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some((self.m * other.n).cmp(&(other.m * self.n)))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.m, self.n)
    }
}

pub fn path_graph(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::from_edges(n, &edges, Tensor::ones(n, 1), None)
}

pub fn complete_graph(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Graph::from_edges(n, &edges, Tensor::ones(n, 1), None)
}

/// Star with `leaves` leaves around node 0.
pub fn star_graph(leaves: usize) -> Result<Graph> {
    let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
    Graph::from_edges(leaves + 1, &edges, Tensor::ones(leaves + 1, 1), None)
}

/// Balanced starlike tree of height `h / 2` on `n` nodes: legs of length
/// `h / 2` hang off node 0, and the leftover nodes form one shorter leg.
pub fn balanced_starlike(n: usize, h: usize) -> Result<Graph> {
    check_starlike(n, h)?;
    let half = h / 2;
    let mut edges = Vec::new();
    let mut next = 1;
    while next < n {
        let mut prev = 0;
        for _ in 0..half.min(n - next) {
            edges.push((prev, next));
            prev = next;
            next += 1;
        }
    }
    Graph::from_edges(n, &edges, Tensor::ones(n, 1), None)
}

fn check_starlike(n: usize, h: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("a tree needs at least one node".into()));
    }
    if h == 0 || h % 2 == 1 {
        return Err(Error::InvalidArgument(format!("the starlike formula needs an even h >= 2, got {h}")));
    }
    Ok(())
}

/// Closed-form n*_h. The starlike value is `max(1, floor((N - 1) / (h / 2)))`;
/// the floor alone reads 0 on trees shorter than one leg.
pub fn closed_form_optimum(family: Family, n: usize, h: usize) -> Result<usize> {
    if h == 0 {
        return Err(Error::InvalidArgument("h must be >= 1".into()));
    }
    match family {
        Family::Path => {
            if n == 0 {
                return Err(Error::InvalidArgument("a path needs at least one node".into()));
            }
            Ok(n.div_ceil(h))
        }
        Family::BalancedStarlike => {
            check_starlike(n, h)?;
            Ok(((n - 1) / (h / 2)).max(1))
        }
    }
}

fn distances(g: &Graph) -> Vec<Vec<usize>> {
    all_pairs_distances(g.adjacency().pattern())
}

/// Bitmask of the nodes closer than `h` hops to each node (itself excluded).
/// Nodes in different components never conflict.
fn conflict_masks(dist: &[Vec<usize>], h: usize) -> Vec<u32> {
    dist.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, &d)| j != i && d != UNREACHABLE && d < h)
                .fold(0u32, |m, (j, _)| m | 1 << j)
        })
        .collect()
}

/// Largest subset of `candidates` with no two members in conflict.
fn max_spread_set(conflicts: &[u32], candidates: u32) -> u32 {
    if candidates == 0 {
        return 0;
    }
    let v = candidates.trailing_zeros() as usize;
    let bit = 1u32 << v;
    let with = bit | max_spread_set(conflicts, candidates & !bit & !conflicts[v]);
    if conflicts[v] & candidates == 0 {
        return with;
    }
    let without = max_spread_set(conflicts, candidates & !bit);
    if without.count_ones() > with.count_ones() {
        without
    } else {
        with
    }
}

/// Exact n*_h: the most nodes that are pairwise at least `h` hops apart.
pub fn optimum_nodes_bruteforce(g: &Graph, h: usize) -> Result<OptimumNodesResult> {
    let n = g.n_nodes();
    if n > MAX_OPTIMUM_NODES {
        return Err(Error::InvalidArgument(format!(
            "exhaustive optimum-node search is limited to {MAX_OPTIMUM_NODES} nodes, got {n}"
        )));
    }
    let conflicts = conflict_masks(&distances(g), h);
    let all = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
    let best = max_spread_set(&conflicts, all);
    let witness: Vec<usize> = (0..n).filter(|&i| best >> i & 1 == 1).collect();
    Ok(OptimumNodesResult { n_nodes: n, h, n_star: witness.len(), witness })
}

/// Pairs of selected nodes that the pooled graph links when edges reach
/// `rf_edge` hops.
pub fn pooled_edge_exists(g: &Graph, selected: &[usize], rf_edge: usize) -> Result<Vec<(usize, usize)>> {
    let n = g.n_nodes();
    if let Some(&bad) = selected.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidArgument(format!("selected node {bad} out of range for {n} nodes")));
    }
    let pattern = g.adjacency().pattern();
    let mut edges = Vec::new();
    for (a, &u) in selected.iter().enumerate() {
        let dist = crate::graph::bfs_distances(pattern, u);
        for &v in &selected[a + 1..] {
            if v != u && dist[v] <= rf_edge {
                edges.push((u.min(v), u.max(v)));
            }
        }
    }
    Ok(edges)
}

/// k*: the smallest `m / N` such that every `m`-subset of nodes keeps at
/// least one pooled edge. `None` when even the full node set has none.
pub fn min_sampling_ratio(g: &Graph, rf_edge: usize) -> Result<Option<Ratio>> {
    let n = g.n_nodes();
    if n > MAX_SAMPLING_NODES {
        return Err(Error::InvalidArgument(format!(
            "exhaustive sampling-ratio search is limited to {MAX_SAMPLING_NODES} nodes, got {n}"
        )));
    }
    let dist = distances(g);
    let linked: Vec<u32> = dist
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter().enumerate().filter(|&(j, &d)| j != i && d <= rf_edge).fold(0, |m, (j, _)| m | 1 << j)
        })
        .collect();
    let has_edge = |mask: u32| (0..n).any(|i| mask >> i & 1 == 1 && linked[i] & mask != 0);
    for m in 2..=n {
        let every = (0u32..1 << n).filter(|s| s.count_ones() as usize == m).all(has_edge);
        if every {
            return Ok(Some(Ratio { m, n }));
        }
    }
    Ok(None)
}
