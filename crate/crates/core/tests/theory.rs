mod common;

use asap_core::autodiff::Tensor;
use asap_core::graph::{prufer_to_edges, Graph};
use asap_core::pool::{pool_graph, PoolConfig, PoolParams};
use asap_core::theory::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAR: usize = usize::MAX / 4;

fn floyd(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.n_nodes();
    let mut d = vec![vec![FAR; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for &j in g.neighbors(i) {
            d[i][j] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

/// Plain enumeration of every node subset.
fn optimum_oracle(g: &Graph, h: usize) -> usize {
    let n = g.n_nodes();
    let d = floyd(g);
    (0u32..1 << n)
        .filter(|&s| (0..n).all(|i| s >> i & 1 == 0 || (i + 1..n).all(|j| s >> j & 1 == 0 || d[i][j] >= h)))
        .map(|s| s.count_ones() as usize)
        .max()
        .unwrap()
}

fn tree(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::from_edges(n, edges, Tensor::ones(n, 1), None).unwrap()
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    let seq: Vec<usize> = (0..n.saturating_sub(2)).map(|_| rng.gen_range(0..n)).collect();
    tree(n, &prufer_to_edges(&seq, n))
}

#[test]
fn optimum_nodes_examples() {
    assert_eq!(optimum_nodes_bruteforce(&path_graph(1).unwrap(), 3).unwrap().n_star, 1);
    let r = optimum_nodes_bruteforce(&path_graph(5).unwrap(), 2).unwrap();
    assert_eq!(r.n_star, 3);
    assert_eq!(r.witness, vec![0, 2, 4]);
    assert_eq!(optimum_nodes_bruteforce(&star_graph(6).unwrap(), 2).unwrap().n_star, 6);
}

#[test]
fn optimum_witness_is_spread_out_and_maximal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..40 {
        let n = rng.gen_range(1..11);
        let g = common::random_graph(&mut rng, n, 1, 0.15);
        let h = 1 + trial % 4;
        let r = optimum_nodes_bruteforce(&g, h).unwrap();
        let d = floyd(&g);
        for (a, &u) in r.witness.iter().enumerate() {
            for &v in &r.witness[a + 1..] {
                assert!(d[u][v] >= h);
            }
        }
        assert_eq!(r.n_star, optimum_oracle(&g, h), "n={n} h={h}");
    }
}

#[test]
fn disconnected_nodes_never_conflict() {
    let g = Graph::from_edges(4, &[(0, 1)], Tensor::ones(4, 1), None).unwrap();
    assert_eq!(optimum_nodes_bruteforce(&g, 5).unwrap().n_star, 3);
}

#[test]
fn optimum_refuses_large_graphs() {
    assert!(optimum_nodes_bruteforce(&path_graph(21).unwrap(), 2).is_err());
    assert!(min_sampling_ratio(&path_graph(17).unwrap(), 1).is_err());
}

#[test]
fn closed_form_examples() {
    assert_eq!(closed_form_optimum(Family::Path, 50, 3).unwrap(), 17);
    assert_eq!(closed_form_optimum(Family::BalancedStarlike, 7, 2).unwrap(), 6);
    for h in 1..6 {
        assert_eq!(closed_form_optimum(Family::Path, h, h).unwrap(), 1);
    }
    assert!(closed_form_optimum(Family::BalancedStarlike, 7, 3).is_err());
    assert!(closed_form_optimum(Family::Path, 0, 2).is_err());
}

#[test]
fn path_formula_matches_brute_force() {
    for n in 1..=20 {
        for h in 1..=4 {
            let brute = optimum_nodes_bruteforce(&path_graph(n).unwrap(), h).unwrap().n_star;
            assert_eq!(closed_form_optimum(Family::Path, n, h).unwrap(), brute, "n={n} h={h}");
        }
    }
}

#[test]
fn starlike_formula_matches_brute_force() {
    for n in 1..=20 {
        for h in [2, 4] {
            let g = balanced_starlike(n, h).unwrap();
            assert_eq!(g.n_edges(), n - 1);
            assert!(g.is_connected());
            let brute = optimum_nodes_bruteforce(&g, h).unwrap().n_star;
            assert_eq!(closed_form_optimum(Family::BalancedStarlike, n, h).unwrap(), brute, "n={n} h={h}");
        }
    }
}

#[test]
fn starlike_has_at_most_one_short_leg() {
    let g = balanced_starlike(12, 6).unwrap();
    let d = floyd(&g);
    let leaves: Vec<usize> = (1..12).filter(|&i| g.neighbors(i).len() == 1).collect();
    let short = leaves.iter().filter(|&&l| d[0][l] < 3).count();
    assert_eq!(leaves.len(), 4);
    assert_eq!(short, 1);
}

#[test]
fn starlike_attains_the_tree_maximum() {
    // no tree on N nodes spreads more nodes than the balanced starlike one
    for n in 2..=8 {
        let (trees, _) = non_isomorphic_trees(n).unwrap();
        for h in [2, 4] {
            let best = trees.iter().map(|e| optimum_nodes_bruteforce(&tree(n, e), h).unwrap().n_star).max();
            assert_eq!(best, Some(closed_form_optimum(Family::BalancedStarlike, n, h).unwrap()), "n={n} h={h}");
        }
    }
}

#[test]
fn pooled_edges_follow_distance() {
    let p = path_graph(6).unwrap();
    assert_eq!(pooled_edge_exists(&p, &[2, 3], 1).unwrap(), vec![(2, 3)]);
    assert_eq!(pooled_edge_exists(&p, &[0, 3], 3).unwrap(), vec![(0, 3)]);
    assert!(pooled_edge_exists(&p, &[0, 3], 1).unwrap().is_empty());
    let all: Vec<usize> = (0..6).collect();
    assert_eq!(pooled_edge_exists(&p, &all, 5).unwrap().len(), 15);
    assert!(pooled_edge_exists(&p, &[6], 1).is_err());
}

#[test]
fn sampling_ratio_examples() {
    for n in 2..=8 {
        let k = min_sampling_ratio(&complete_graph(n).unwrap(), 1).unwrap().unwrap();
        assert_eq!(k, Ratio { m: 2, n });
    }
    let k = min_sampling_ratio(&path_graph(9).unwrap(), 1).unwrap().unwrap();
    assert_eq!(k.m, 6);
    assert!((k.value() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(min_sampling_ratio(&star_graph(8).unwrap(), 1).unwrap().unwrap().value(), 1.0);
    assert_eq!(min_sampling_ratio(&path_graph(3).unwrap(), 3).unwrap().unwrap(), Ratio { m: 2, n: 3 });
    assert_eq!(min_sampling_ratio(&path_graph(1).unwrap(), 1).unwrap(), None);
    let apart = Graph::from_edges(2, &[], Tensor::ones(2, 1), None).unwrap();
    assert_eq!(min_sampling_ratio(&apart, 3).unwrap(), None);
}

#[test]
fn sampling_ratio_is_one_more_than_optimum_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..60 {
        let n = rng.gen_range(2..12);
        let g = if trial % 2 == 0 { random_tree(&mut rng, n) } else { common::random_graph(&mut rng, n, 1, 0.2) };
        for rf in [1, 2, 3] {
            let k = min_sampling_ratio(&g, rf).unwrap().unwrap();
            let n_star = optimum_oracle(&g, rf + 1);
            assert_eq!(k.m, n_star + 1, "trial {trial} rf={rf}");
            assert_eq!((k.value() * n as f64 - 1e-9).ceil() as usize, k.m);
        }
    }
}

#[test]
fn canonical_form_identifies_isomorphic_trees() {
    let a = canonical_tree(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    let b = canonical_tree(5, &[(3, 0), (0, 4), (4, 1), (1, 2)]);
    let star = canonical_tree(5, &[(2, 0), (2, 1), (2, 3), (2, 4)]);
    assert_eq!(a, b);
    assert_ne!(a, star);
}

#[test]
fn tree_counts_match_known_sequence() {
    // unlabeled trees on 1..=9 nodes
    let known = [1, 1, 1, 2, 3, 6, 11, 23, 47];
    for (i, &count) in known.iter().enumerate() {
        let n = i + 1;
        let (trees, labeled) = non_isomorphic_trees(n).unwrap();
        assert_eq!(trees.len(), count, "n={n}");
        assert_eq!(labeled, n.pow(n.saturating_sub(2) as u32));
    }
    assert!(non_isomorphic_trees(10).is_err());
}

#[test]
fn tree_theorem_holds_up_to_nine_nodes() {
    let report = verify_tree_theorem(9).unwrap();
    assert!(report.pass(), "{report:#?}");
    let five = report.rows.iter().find(|r| r.n == 5).unwrap();
    assert_eq!(five.topk_worst, Ratio { m: 5, n: 5 });
    assert_eq!(five.asap_worst, Ratio { m: 3, n: 5 });
    for row in &report.rows {
        assert!(row.asap_worst <= row.topk_worst);
        assert_eq!(row.topk_worst.value(), 1.0);
    }
    let nine = report.paths.last().unwrap();
    assert_eq!((nine.topk, nine.asap), (Ratio { m: 6, n: 9 }, Ratio { m: 4, n: 9 }));
    assert!(verify_tree_theorem(10).is_err());
}

#[test]
fn path_ratios_approach_reciprocal_receptive_field() {
    let p = path_graph(16).unwrap();
    let topk = min_sampling_ratio(&p, 1).unwrap().unwrap().value();
    let asap = min_sampling_ratio(&p, 3).unwrap().unwrap().value();
    assert!((topk - (8.0 + 1.0) / 16.0).abs() < 1e-15);
    assert!((asap - (4.0 + 1.0) / 16.0).abs() < 1e-15);
    assert!(topk - PathRow::TOPK_LIMIT < 0.1 && asap - PathRow::ASAP_LIMIT < 0.1);
}

#[test]
fn graph_power_reach() {
    let r = verify_graph_power(&path_graph(8).unwrap(), 2, 1).unwrap();
    assert_eq!((r.topk_reach, r.asap_reach), (2, 4));
    assert!(r.pass());
    let r = verify_graph_power(&path_graph(8).unwrap(), 1, 1).unwrap();
    assert_eq!((r.topk_reach, r.asap_reach), (1, 3));
    let r = verify_graph_power(&path_graph(8).unwrap(), 7, 1).unwrap();
    assert_eq!((r.topk_reach, r.asap_reach), (7, 7));
}

#[test]
fn graph_power_with_unit_power_matches_pooled_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..15 {
        let n = rng.gen_range(3..12);
        let g = common::random_graph(&mut rng, n, 1, 0.1);
        let all: Vec<usize> = (0..n).collect();
        let d = floyd(&g);
        for h in [1, 2] {
            let r = verify_graph_power(&g, 1, h).unwrap();
            assert!(r.pass(), "{r:?}");
            let far = pooled_edge_exists(&g, &all, 2 * h + 1).unwrap().iter().map(|&(u, v)| d[u][v]).max();
            assert_eq!(Some(r.asap_reach), far);
        }
        for p in 2..5 {
            assert!(verify_graph_power(&g, p, 1).unwrap().pass());
        }
    }
}

#[test]
fn identity_permutation_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = common::random_graph(&mut rng, 8, 3, 0.2);
    let config = PoolConfig::default();
    let params = PoolParams::init(&mut rng, &config, 3);
    let a = pool_graph(&g, &params, &config).unwrap();
    let b = pool_graph(&g, &params, &config).unwrap();
    let id: Vec<usize> = (0..8).collect();
    assert_eq!(relabeling_error(&a, &b, &id), 0.0);
}

#[test]
fn equivariance_holds_on_random_graphs() {
    let report = verify_equivariance(100, 0).unwrap();
    assert_eq!(report.passed, 100, "{report:?}");
    assert!(report.max_error <= 1e-8);
}

#[test]
fn tied_fitness_breaks_equivariance() {
    let tie = tie_counterexample().unwrap();
    assert_eq!(tie.selected, vec![0, 1, 2]);
    assert_eq!(tie.relabeled_selected, vec![0, 1, 2]);
    assert!(tie.error > 1e-8);
}
