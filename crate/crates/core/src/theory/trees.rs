use std::collections::BTreeMap;

use super::{balanced_starlike, closed_form_optimum, min_sampling_ratio, path_graph, star_graph, Family, Ratio};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{prufer_to_edges, Graph};

pub const MAX_TREE_NODES: usize = 9;

/// Worst case over all trees of one size.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeRow {
    pub n: usize,
    pub labeled_trees: usize,
    pub trees: usize,
    /// Worst k* with pooled edges reaching one hop (TopK, h = 1).
    pub topk_worst: Ratio,
    /// Worst k* with pooled edges reaching 2h + 1 = 3 hops (ASAP, h = 1).
    pub asap_worst: Ratio,
    /// Pigeonhole bound (n*_{rf+1} of the balanced starlike tree + 1) / N.
    pub topk_bound: Ratio,
    pub asap_bound: Ratio,
    pub star_attains_topk: bool,
    pub starlike_attains_asap: bool,
    /// ASAP's k* is at most TopK's on every tree of this size.
    pub asap_never_worse: bool,
}

impl TreeRow {
    pub fn pass(&self) -> bool {
        self.topk_worst == self.topk_bound
            && self.asap_worst == self.asap_bound
            && self.star_attains_topk
            && self.starlike_attains_asap
            && self.asap_never_worse
    }
}

/// k* on paths next to the limits 1 / (rf + 1) of the path theorem.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRow {
    pub n: usize,
    pub topk: Ratio,
    pub asap: Ratio,
    /// m predicted by ceil(N / (rf + 1)) + 1.
    pub topk_formula: usize,
    pub asap_formula: usize,
}

impl PathRow {
    pub const TOPK_LIMIT: f64 = 0.5;
    pub const ASAP_LIMIT: f64 = 0.25;

    pub fn pass(&self) -> bool {
        self.topk.m == self.topk_formula.min(self.n) && self.asap.m == self.asap_formula.min(self.n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityReport {
    pub family: String,
    pub n_range: (usize, usize),
    pub rows: Vec<TreeRow>,
    pub paths: Vec<PathRow>,
}

impl ConnectivityReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(TreeRow::pass) && self.paths.iter().all(PathRow::pass)
    }
}

fn adjacency_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

/// One or two centres, found by peeling leaves.
fn centres(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut layer: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    let mut left = n;
    while left > 2 {
        left -= layer.len();
        let mut next = Vec::new();
        for &leaf in &layer {
            for &v in &adj[leaf] {
                degree[v] -= 1;
                if degree[v] == 1 {
                    next.push(v);
                }
            }
        }
        layer = next;
    }
    layer
}

fn encode(adj: &[Vec<usize>], v: usize, parent: usize, out: &mut Vec<u8>) {
    let mut children: Vec<Vec<u8>> = adj[v]
        .iter()
        .filter(|&&c| c != parent)
        .map(|&c| {
            let mut s = Vec::new();
            encode(adj, c, v, &mut s);
            s
        })
        .collect();
    children.sort();
    out.push(b'(');
    for c in children {
        out.extend(c);
    }
    out.push(b')');
}

/// Canonical string of an unlabeled tree: the smallest centre-rooted AHU
/// encoding, so two trees get equal strings iff they are isomorphic.
pub fn canonical_tree(n: usize, edges: &[(usize, usize)]) -> Vec<u8> {
    let adj = adjacency_lists(n, edges);
    centres(&adj)
        .into_iter()
        .map(|c| {
            let mut s = Vec::new();
            encode(&adj, c, usize::MAX, &mut s);
            s
        })
        .min()
        .unwrap_or_default()
}

/// All unlabeled trees on `n` nodes, found by decoding every Prüfer
/// sequence and keeping one labeled representative per canonical form.
/// Also returns the number of labeled trees visited.
pub fn non_isomorphic_trees(n: usize) -> Result<(Vec<Vec<(usize, usize)>>, usize)> {
    if n == 0 || n > MAX_TREE_NODES {
        return Err(Error::InvalidArgument(format!("tree enumeration needs 1 <= N <= {MAX_TREE_NODES}, got {n}")));
    }
    let len = n.saturating_sub(2);
    let mut seen = BTreeMap::new();
    let mut seq = vec![0usize; len];
    let mut visited = 0;
    loop {
        let edges = prufer_to_edges(&seq, n);
        visited += 1;
        seen.entry(canonical_tree(n, &edges)).or_insert(edges);
        // odometer increment over 0..n in every position
        let mut i = 0;
        while i < len && seq[i] == n - 1 {
            seq[i] = 0;
            i += 1;
        }
        if i == len {
            break;
        }
        seq[i] += 1;
    }
    Ok((seen.into_values().collect(), visited))
}

fn k_star(g: &Graph, rf: usize) -> Result<Ratio> {
    min_sampling_ratio(g, rf)?
        .ok_or_else(|| Error::InvalidArgument(format!("no pooled edge survives on a {}-node graph", g.n_nodes())))
}

fn starlike_bound(n: usize, rf: usize) -> Result<Ratio> {
    Ok(Ratio { m: closed_form_optimum(Family::BalancedStarlike, n, rf + 1)? + 1, n })
}

/// Enumerates every tree with 2..=`n_max` nodes and compares the worst-case
/// k* of one-hop pooled edges (TopK) against three-hop edges (ASAP).
pub fn verify_tree_theorem(n_max: usize) -> Result<ConnectivityReport> {
    if !(2..=MAX_TREE_NODES).contains(&n_max) {
        return Err(Error::InvalidArgument(format!(
            "tree theorem check needs 2 <= N_max <= {MAX_TREE_NODES}, got {n_max}"
        )));
    }
    let mut rows = Vec::new();
    let mut paths = Vec::new();
    for n in 2..=n_max {
        let (trees, labeled) = non_isomorphic_trees(n)?;
        let mut topk_worst = Ratio { m: 0, n };
        let mut asap_worst = Ratio { m: 0, n };
        let mut asap_never_worse = true;
        for edges in &trees {
            let g = Graph::from_edges(n, edges, Tensor::ones(n, 1), None)?;
            let topk = k_star(&g, 1)?;
            let asap = k_star(&g, 3)?;
            asap_never_worse &= asap <= topk;
            topk_worst = if topk > topk_worst { topk } else { topk_worst };
            asap_worst = if asap > asap_worst { asap } else { asap_worst };
        }
        let star = k_star(&star_graph(n - 1)?, 1)?;
        let starlike = k_star(&balanced_starlike(n, 4)?, 3)?;
        rows.push(TreeRow {
            n,
            labeled_trees: labeled,
            trees: trees.len(),
            topk_worst,
            asap_worst,
            topk_bound: starlike_bound(n, 1)?,
            asap_bound: starlike_bound(n, 3)?,
            star_attains_topk: star == topk_worst,
            starlike_attains_asap: starlike == asap_worst,
            asap_never_worse,
        });
        let path = path_graph(n)?;
        paths.push(PathRow {
            n,
            topk: k_star(&path, 1)?,
            asap: k_star(&path, 3)?,
            topk_formula: n.div_ceil(2) + 1,
            asap_formula: n.div_ceil(4) + 1,
        });
    }
    Ok(ConnectivityReport { family: "trees".into(), n_range: (2, n_max), rows, paths })
}
