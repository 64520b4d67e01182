//! Graph data model, dataset ingestion and structural utilities.

mod prufer;
mod structure;
mod synthetic;
mod tu;

use std::collections::BTreeSet;

pub use prufer::{prufer_to_edges, random_tree_edges};
pub use structure::{
    all_pairs_distances, bfs_distances, graph_power, h_hop_membership, normalize_gcn, reach_pattern, UNREACHABLE,
};
pub use synthetic::synthetic_motif_dataset;
pub use tu::{known_stats, load_tu_dataset, write_tu_dataset, DatasetStats};

use crate::autodiff::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Undirected weighted graph with node features and an optional class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: SparseMatrix,
    features: Tensor,
    label: Option<usize>,
}

impl Graph {
    /// Validates symmetry, non-negative weights and the absence of self-loops.
    pub fn new(adjacency: SparseMatrix, features: Tensor, label: Option<usize>) -> Result<Self> {
        let n = adjacency.n_rows();
        if adjacency.n_cols() != n {
            return Err(Error::shape("graph", format!("adjacency is {}x{}", n, adjacency.n_cols())));
        }
        if features.rows() != n {
            return Err(Error::shape("graph", format!("{} feature rows for {n} nodes", features.rows())));
        }
        for (r, c, v) in adjacency.triplets() {
            if r == c {
                return Err(Error::InvalidArgument(format!("self-loop on node {r}")));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("edge ({r}, {c}) has weight {v}")));
            }
        }
        if !adjacency.is_symmetric(0.0) {
            return Err(Error::InvalidArgument("adjacency is not symmetric".into()));
        }
        Ok(Graph { adjacency, features, label })
    }

    /// Unit-weight graph from an undirected edge list; duplicates and
    /// reversed duplicates are merged, self-loops dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], features: Tensor, label: Option<usize>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) in a {n}-node graph")));
            }
            if a != b {
                set.insert((a, b));
                set.insert((b, a));
            }
        }
        let triplets: Vec<_> = set.into_iter().map(|(a, b)| (a, b, 1.0)).collect();
        Graph::new(SparseMatrix::from_triplets(n, n, &triplets)?, features, label)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.n_nodes() {
            return Err(Error::shape(
                "graph",
                format!("{} feature rows for {} nodes", features.rows(), self.n_nodes()),
            ));
        }
        self.features = features;
        Ok(self)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        let p = self.adjacency.pattern();
        &p.cols()[p.row_range(i)]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_nodes()).map(|i| self.neighbors(i).len()).collect()
    }

    /// Undirected edges `(a, b)` with `a < b`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.adjacency.pattern().coords().filter(|(a, b)| a < b).collect()
    }

    pub fn triangle_count(&self) -> usize {
        let mut count = 0;
        for (a, b) in self.edge_list() {
            // common neighbours c > b close a triangle counted once
            let (na, nb) = (self.neighbors(a), self.neighbors(b));
            let (mut i, mut j) = (0, 0);
            while i < na.len() && j < nb.len() {
                match na[i].cmp(&nb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if na[i] > b {
                            count += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        n == 0 || bfs_distances(self.adjacency.pattern(), 0).iter().all(|&d| d != UNREACHABLE)
    }
}

/// Relabels nodes: old node `i` becomes node `perm[i]` (features `PX`, adjacency `PAPᵀ`).
pub fn permute_graph(g: &Graph, perm: &[usize]) -> Result<Graph> {
    let n = g.n_nodes();
    check_permutation(perm, n)?;
    let mut features = Tensor::zeros(n, g.feature_dim());
    for i in 0..n {
        features.row_mut(perm[i]).copy_from_slice(g.features.row(i));
    }
    let triplets: Vec<_> = g.adjacency.triplets().map(|(r, c, v)| (perm[r], perm[c], v)).collect();
    Graph::new(SparseMatrix::from_triplets(n, n, &triplets)?, features, g.label)
}

pub fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Labeled collection of graphs sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    n_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, n_classes: usize) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidArgument(format!(
                    "graph {i} has feature dim {}, expected {feature_dim}",
                    g.feature_dim()
                )));
            }
            match g.label() {
                Some(l) if l < n_classes => {}
                other => {
                    return Err(Error::InvalidArgument(format!("graph {i} label {other:?} not in 0..{n_classes}")));
                }
            }
        }
        Ok(Dataset { name: name.into(), graphs, n_classes, feature_dim })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label().expect("dataset graphs are labeled")).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats::of(self)
    }
}

/// Degree of every node divided by `max_degree` (or 1 when the graph set has no edges).
pub(crate) fn normalized_degree_features(graphs: &mut [Graph]) {
    let max_deg = graphs.iter().flat_map(|g| g.degrees()).max().unwrap_or(0).max(1) as f64;
    for g in graphs.iter_mut() {
        let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64 / max_deg).collect();
        g.features = Tensor::column(&deg);
    }
}

/// Disjoint union of several graphs with node-to-graph segment ids.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub adjacency: SparseMatrix,
    pub features: Tensor,
    pub segment: Vec<usize>,
    pub counts: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl GraphBatch {
    pub fn n_graphs(&self) -> usize {
        self.counts.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.segment.len()
    }

    /// Labels of every graph; fails if any is missing.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidArgument(format!("graph {i} of the batch has no label"))))
            .collect()
    }
}

/// Block-diagonal concatenation.
pub fn batch(graphs: &[&Graph]) -> Result<GraphBatch> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("cannot batch zero graphs".into()));
    }
    let d = graphs[0].feature_dim();
    let total: usize = graphs.iter().map(|g| g.n_nodes()).sum();
    let mut features = Tensor::zeros(total, d);
    let mut triplets = Vec::new();
    let mut segment = Vec::with_capacity(total);
    let mut counts = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        if g.feature_dim() != d {
            return Err(Error::shape("batch", format!("graph {gi} has feature dim {}, expected {d}", g.feature_dim())));
        }
        for i in 0..g.n_nodes() {
            features.row_mut(offset + i).copy_from_slice(g.features().row(i));
        }
        triplets.extend(g.adjacency().triplets().map(|(r, c, v)| (r + offset, c + offset, v)));
        segment.extend(std::iter::repeat(gi).take(g.n_nodes()));
        counts.push(g.n_nodes());
        offset += g.n_nodes();
    }
    Ok(GraphBatch {
        adjacency: SparseMatrix::from_triplets(total, total, &triplets)?,
        features,
        segment,
        counts,
        labels: graphs.iter().map(|g| g.label()).collect(),
    })
}
