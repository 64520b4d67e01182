use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{permute_graph, random_tree_edges, Graph};
use crate::layers::{AttentionKind, LeConvParams};
use crate::pool::{pool_graph, AggregationMode, FitnessKind, FitnessParams, PoolConfig, PoolParams, PooledGraph};

pub const TRIAL_NODES: usize = 8;
pub const FEATURE_DIM: usize = 3;
pub const TOLERANCE: f64 = 1e-8;
pub const MIN_FITNESS_GAP: f64 = 1e-9;
const MAX_DRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct EquivarianceReport {
    pub trials: usize,
    pub passed: usize,
    pub max_error: f64,
    /// Draws thrown away because two fitness values nearly tied.
    pub resampled: usize,
    pub failures: Vec<usize>,
}

impl EquivarianceReport {
    pub fn pass(&self) -> bool {
        self.passed == self.trials
    }
}

/// Largest entrywise gap between the pooled output of `g` and that of its
/// relabeling `h = P g`, after mapping the latter back through `perm`.
/// Infinite if the two select different nodes.
pub fn relabeling_error(g: &PooledGraph, h: &PooledGraph, perm: &[usize]) -> f64 {
    let mapped: Vec<usize> = g.selected.iter().map(|&i| perm[i]).collect();
    if mapped != h.selected {
        return f64::INFINITY;
    }
    let mut err = max_gap(&g.x, &h.x);
    err = err.max(max_gap(&g.adjacency.to_dense(), &h.adjacency.to_dense()));
    for (i, &p) in perm.iter().enumerate() {
        err = err.max((g.fitness.get(i, 0) - h.fitness.get(p, 0)).abs());
    }
    if let (Some(sg), Some(sh)) = (&g.assignment, &h.assignment) {
        let (sg, sh) = (sg.to_dense(), sh.to_dense());
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..sg.cols() {
                err = err.max((sg.get(i, c) - sh.get(p, c)).abs());
            }
        }
    }
    err
}

fn max_gap(a: &Tensor, b: &Tensor) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn min_gap(fitness: &Tensor) -> f64 {
    let mut v = fitness.data().to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Every pooling variant, cycled through by the trials.
fn configs() -> Vec<PoolConfig> {
    let mut out = Vec::new();
    for h in [1, 2] {
        for attention in AttentionKind::ALL {
            for fitness in FitnessKind::ALL {
                for aggregation in AggregationMode::ALL {
                    for soft_edges in [true, false] {
                        out.push(PoolConfig { k: 0.5, h, attention, fitness, aggregation, soft_edges });
                    }
                }
            }
        }
    }
    out
}

fn random_graph(rng: &mut ChaCha8Rng) -> Result<Graph> {
    let mut edges = random_tree_edges(rng, TRIAL_NODES);
    for i in 0..TRIAL_NODES {
        for j in i + 1..TRIAL_NODES {
            if rng.gen_bool(0.2) {
                edges.push((i, j));
            }
        }
    }
    let features = Tensor::zeros(TRIAL_NODES, FEATURE_DIM);
    Graph::from_edges(TRIAL_NODES, &edges, features, None)
}

/// Pools random graphs and random relabelings of them, checking that the
/// outputs agree after undoing the relabeling. Draws whose fitness values
/// come within `MIN_FITNESS_GAP` of a tie are redrawn, graph included,
/// since ties make any top-k selection depend on node order. Clusters that
/// cover the same nodes can tie whatever the features are.
pub fn verify_equivariance(trials: usize, seed: u64) -> Result<EquivarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs = configs();
    let mut report = EquivarianceReport { trials, passed: 0, max_error: 0.0, resampled: 0, failures: Vec::new() };
    for trial in 0..trials {
        let config = &configs[trial % configs.len()];
        let params = PoolParams::init(&mut rng, config, FEATURE_DIM);
        let mut attempts = 0;
        let (g, pooled) = loop {
            let skeleton = random_graph(&mut rng)?;
            let x = Tensor::from_vec(
                TRIAL_NODES,
                FEATURE_DIM,
                (0..TRIAL_NODES * FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )?;
            let g = skeleton.with_features(x)?;
            let pooled = pool_graph(&g, &params, config)?;
            if min_gap(&pooled.fitness) >= MIN_FITNESS_GAP {
                break (g, pooled);
            }
            report.resampled += 1;
            attempts += 1;
            if attempts == MAX_DRAWS {
                return Err(Error::InvalidArgument(format!("no tie-free draw for {config:?} after {MAX_DRAWS} tries")));
            }
        };
        let mut perm: Vec<usize> = (0..TRIAL_NODES).collect();
        perm.shuffle(&mut rng);
        let relabeled = pool_graph(&permute_graph(&g, &perm)?, &params, config)?;
        let err = relabeling_error(&pooled, &relabeled, &perm);
        report.max_error = report.max_error.max(err);
        if err <= TOLERANCE {
            report.passed += 1;
        } else {
            report.failures.push(trial);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TieCounterexample {
    pub selected: Vec<usize>,
    pub relabeled_selected: Vec<usize>,
    pub error: f64,
}

/// With all LEConv weights zero every fitness value is sigmoid(0), so the
/// lower-index tie-break alone picks the clusters. Reversing a path with
/// distinct features then keeps the other end and the outputs disagree.
pub fn tie_counterexample() -> Result<TieCounterexample> {
    let n = 6;
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    let x = Tensor::from_vec(n, 1, (0..n).map(|i| i as f64).collect())?;
    let g = Graph::from_edges(n, &edges, x, None)?;
    let config = PoolConfig::default();
    let mut params = PoolParams::init(&mut ChaCha8Rng::seed_from_u64(0), &config, 1);
    params.fitness = FitnessParams::LeConv(LeConvParams {
        w1: Tensor::zeros(1, 1),
        w2: Tensor::zeros(1, 1),
        w3: Tensor::zeros(1, 1),
    });
    let perm: Vec<usize> = (0..n).rev().collect();
    let pooled = pool_graph(&g, &params, &config)?;
    let relabeled = pool_graph(&permute_graph(&g, &perm)?, &params, &config)?;
    let mapped: Vec<usize> = pooled.selected.iter().map(|&i| perm[i]).collect();
    Ok(TieCounterexample {
        selected: pooled.selected.clone(),
        relabeled_selected: relabeled.selected.clone(),
        error: if mapped == relabeled.selected {
            relabeling_error(&pooled, &relabeled, &perm)
        } else {
            max_gap(&pooled.x, &relabeled.x)
        },
    })
}
