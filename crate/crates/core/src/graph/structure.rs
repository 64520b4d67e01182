use std::collections::VecDeque;
use std::sync::Arc;

use crate::autodiff::{SparseMatrix, SparsePattern};
use crate::error::{Error, Result};

pub const UNREACHABLE: usize = usize::MAX;

/// Hop distances from `source`; unreachable nodes get [`UNREACHABLE`].
pub fn bfs_distances(adj: &SparsePattern, source: usize) -> Vec<usize> {
    let mut dist = vec![UNREACHABLE; adj.n_rows()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for k in adj.row_range(u) {
            let v = adj.cols()[k];
            if dist[v] == UNREACHABLE {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn all_pairs_distances(adj: &SparsePattern) -> Vec<Vec<usize>> {
    (0..adj.n_rows()).map(|s| bfs_distances(adj, s)).collect()
}

/// Boolean closure of `(pattern + I)^steps`.
pub fn reach_pattern(pattern: &SparsePattern, steps: usize) -> Result<SparsePattern> {
    let (base, _) = pattern.with_diagonal()?;
    let mut reach = base.clone();
    for _ in 1..steps {
        let (next, _) = reach.product(&base)?;
        if next.nnz() == reach.nnz() {
            break;
        }
        reach = next;
    }
    Ok(reach)
}

fn reach_within(a: &SparseMatrix, steps: usize) -> Result<SparseMatrix> {
    let reach = reach_pattern(a.pattern(), steps)?;
    let nnz = reach.nnz();
    SparseMatrix::new(Arc::new(reach), vec![1.0; nnz])
}

/// Cluster pattern: entry `(i, j)` is present iff node `j` lies within
/// `h` hops of medoid `i` (the medoid included).
pub fn h_hop_membership(a: &SparseMatrix, h: usize) -> Result<SparseMatrix> {
    if h < 1 {
        return Err(Error::InvalidArgument(format!("cluster radius h must be >= 1, got {h}")));
    }
    reach_within(a, h)
}

/// Pattern of `(A + I)^p`.
pub fn graph_power(a: &SparseMatrix, p: usize) -> Result<SparseMatrix> {
    if p < 1 {
        return Err(Error::InvalidArgument(format!("graph power must be >= 1, got {p}")));
    }
    reach_within(a, p)
}

/// Symmetric GCN propagation matrix `D̂^-1/2 (A + I) D̂^-1/2`.
pub fn normalize_gcn(a: &SparseMatrix) -> Result<SparseMatrix> {
    let (pattern, src) = a.pattern().with_diagonal()?;
    let mut values: Vec<f64> = pattern
        .coords()
        .zip(&src)
        .map(|((r, c), s)| s.map_or(0.0, |k| a.values()[k]) + if r == c { 1.0 } else { 0.0 })
        .collect();
    let mut deg = vec![0.0; pattern.n_rows()];
    for ((r, _), v) in pattern.coords().zip(&values) {
        deg[r] += v;
    }
    let dinv: Vec<f64> = deg.iter().map(|d| d.powf(-0.5)).collect();
    for ((r, c), v) in pattern.coords().zip(values.iter_mut()) {
        *v *= dinv[r] * dinv[c];
    }
    SparseMatrix::new(Arc::new(pattern), values)
}
