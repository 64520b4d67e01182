//! Shared fixtures and a dense, tape-free reimplementation of the pooling
//! pipeline used as an oracle.

#![allow(dead_code)]

pub mod oracle;

use asap_core::autodiff::Tensor;
use asap_core::graph::Graph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Connected-ish random graph: a random spanning path plus extra edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, extra: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    let feats = Tensor::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    Graph::from_edges(n, &edges, feats, Some(rng.gen_range(0..2))).unwrap()
}

/// Random graph whose edges carry non-unit positive weights.
pub fn random_weighted_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, extra: f64) -> Graph {
    let g = random_graph(rng, n, d, extra);
    let mut trip = Vec::new();
    for (a, b) in g.edge_list() {
        let w = rng.gen_range(0.2..2.0);
        trip.push((a, b, w));
        trip.push((b, a, w));
    }
    let adj = asap_core::autodiff::SparseMatrix::from_triplets(n, n, &trip).unwrap();
    Graph::new(adj, g.features().clone(), g.label()).unwrap()
}

pub fn path(n: usize, d: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::from_edges(n, &edges, Tensor::ones(n, d), None).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Prints one acceptance line in a fixed format.
pub fn report(id: &str, name: &str, pass: bool, detail: &str) {
    println!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
