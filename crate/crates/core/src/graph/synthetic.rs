use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalized_degree_features, random_tree_edges, Dataset, Graph};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Two-class structural corpus.
///
/// Even-indexed graphs (class 0) are uniform random trees on 10 to 30 nodes.
/// Odd-indexed graphs (class 1) are such trees with a triangle hung off a
/// random node: two extra nodes joined to it and to each other. Node
/// features are degrees normalised by the corpus-wide maximum degree.
pub fn synthetic_motif_dataset(n_graphs: usize, seed: u64) -> Result<Dataset> {
    if n_graphs < 20 || n_graphs % 2 != 0 {
        return Err(Error::InvalidArgument(format!("n_graphs must be even and >= 20, got {n_graphs}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(n_graphs);
    for i in 0..n_graphs {
        let label = i % 2;
        let n_tree = rng.gen_range(10..=30);
        let mut edges = random_tree_edges(&mut rng, n_tree);
        let mut n = n_tree;
        if label == 1 {
            let anchor = rng.gen_range(0..n_tree);
            let (a, b) = (n_tree, n_tree + 1);
            edges.extend([(anchor, a), (anchor, b), (a, b)]);
            n += 2;
        }
        graphs.push(Graph::from_edges(n, &edges, Tensor::zeros(n, 1), Some(label))?);
    }
    normalized_degree_features(&mut graphs);
    Dataset::new(format!("synthetic-motif-{n_graphs}-{seed}"), graphs, 2)
}
