mod common;

use asap_core::autodiff::{grad_check, Tape, Tensor, Var};
use asap_core::graph::{batch, permute_graph, synthetic_motif_dataset, Graph};
use asap_core::layers::ParamGroup;
use asap_core::model::{forward_bound, readout, Mode, Model, ModelConfig};
use asap_core::train::{Adam, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_config(in_dim: usize) -> ModelConfig {
    ModelConfig { hidden: 4, ..ModelConfig::new(in_dim, 2) }
}

#[test]
fn readout_of_two_nodes() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap());
    let r = readout(&mut t, x, &[0, 0], 1).unwrap();
    assert_eq!(t.value(r).data(), &[1.0, 1.0, 2.0, 2.0]);
}

#[test]
fn readout_of_single_node_repeats_it() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::from_rows(&[[0.5, -3.0, 7.0]]).unwrap());
    let r = readout(&mut t, x, &[0], 1).unwrap();
    assert_eq!(t.value(r).data(), &[0.5, -3.0, 7.0, 0.5, -3.0, 7.0]);
}

#[test]
fn batched_readout_matches_loop() {
    let mut r = rng(1);
    let counts = [3usize, 1, 5, 2];
    let segment: Vec<usize> = counts.iter().enumerate().flat_map(|(g, &c)| std::iter::repeat(g).take(c)).collect();
    let x = common::random_tensor(&mut r, segment.len(), 3);
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let out = readout(&mut t, xv, &segment, counts.len()).unwrap();
    let out = t.value(out);
    let mut start = 0;
    for (g, &c) in counts.iter().enumerate() {
        for col in 0..3 {
            let vals: Vec<f64> = (start..start + c).map(|i| x.get(i, col)).collect();
            let mean = vals.iter().sum::<f64>() / c as f64;
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((out.get(g, col) - mean).abs() < 1e-12);
            assert_eq!(out.get(g, 3 + col), max);
        }
        start += c;
    }
}

#[test]
fn eval_forward_is_deterministic() {
    let ds = synthetic_motif_dataset(20, 3).unwrap();
    let graphs: Vec<&Graph> = ds.graphs().iter().collect();
    let b = batch(&graphs).unwrap();
    let model = Model::new(ModelConfig { dropout: 0.5, ..ModelConfig::new(1, 2) }, 4).unwrap();
    let first = model.logits(&b).unwrap();
    let second = model.logits(&b).unwrap();
    assert_eq!(first, second);
    assert_eq!(Model::new(model.config, 4).unwrap().logits(&b).unwrap(), first);
}

#[test]
fn dropout_only_acts_in_training() {
    let ds = synthetic_motif_dataset(20, 3).unwrap();
    let graphs: Vec<&Graph> = ds.graphs().iter().take(6).collect();
    let b = batch(&graphs).unwrap();
    let model = Model::new(ModelConfig { dropout: 0.5, ..ModelConfig::new(1, 2) }, 4).unwrap();
    let mut t = Tape::new();
    let mut r = rng(5);
    let (train, _) = model.forward(&mut t, &b, Mode::Train(&mut r)).unwrap();
    assert_ne!(t.value(train), &model.logits(&b).unwrap());
}

#[test]
fn batching_does_not_mix_graphs() {
    let mut r = rng(6);
    let gs: Vec<Graph> = (0..4).map(|i| common::random_graph(&mut r, 5 + i, 3, 0.3)).collect();
    let refs: Vec<&Graph> = gs.iter().collect();
    let model = Model::new(small_config(3), 7).unwrap();
    let together = model.logits(&batch(&refs).unwrap()).unwrap();
    for (i, g) in gs.iter().enumerate() {
        let alone = model.logits(&batch(&[g]).unwrap()).unwrap();
        for c in 0..2 {
            assert!((alone.get(0, c) - together.get(i, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn logits_are_invariant_to_node_order() {
    let mut r = rng(8);
    let model = Model::new(ModelConfig::new(3, 2), 9).unwrap();
    for _ in 0..20 {
        let n = r.gen_range(6..12);
        let g = common::random_graph(&mut r, n, 3, 0.25);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let h = permute_graph(&g, &perm).unwrap();
        let a = model.logits(&batch(&[&g]).unwrap()).unwrap();
        let b = model.logits(&batch(&[&h]).unwrap()).unwrap();
        for c in 0..2 {
            assert!((a.get(0, c) - b.get(0, c)).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn full_model_gradients() {
    let mut r = rng(10);
    let gs = [common::random_graph(&mut r, 6, 3, 0.3), common::random_graph(&mut r, 6, 3, 0.3)];
    let b = batch(&[&gs[0], &gs[1]]).unwrap();
    let labels = [0usize, 1];
    let model = Model::new(small_config(3), 11).unwrap();
    let mut flat = Vec::new();
    model.params.visit("", &mut |_, t| flat.push(t.clone()));
    let template = model.params.bind(&mut Tape::new());
    let err = grad_check(
        |t, p| {
            let mut bound = template.clone();
            let mut next = p.iter();
            bound.visit_mut("", &mut |_, v: &mut Var| *v = *next.next().unwrap());
            let logits = forward_bound(t, &model.config, &bound, &b, Mode::Eval)?;
            t.cross_entropy(logits, &labels)
        },
        &flat,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn logits_are_finite_on_the_corpus() {
    let ds = synthetic_motif_dataset(200, 7).unwrap();
    let model = Model::new(ModelConfig::new(1, 2), 12).unwrap();
    for chunk in ds.graphs().chunks(50) {
        let refs: Vec<&Graph> = chunk.iter().collect();
        let logits = model.logits(&batch(&refs).unwrap()).unwrap();
        assert!(logits.data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn loss_falls_over_first_adam_steps() {
    let ds = synthetic_motif_dataset(200, 7).unwrap();
    let refs: Vec<&Graph> = ds.graphs().iter().collect();
    let b = batch(&refs).unwrap();
    let labels = b.labels().unwrap();
    let config = TrainConfig::default();
    let mut model = Model::new(config.model_config(1, 2), 13).unwrap();
    let mut adam = Adam::new(config.weight_decay);
    let mut losses = Vec::new();
    for _ in 0..21 {
        let mut t = Tape::new();
        let (logits, bound) = model.forward(&mut t, &b, Mode::Eval).unwrap();
        let loss = t.cross_entropy(logits, &labels).unwrap();
        losses.push(t.value(loss).item());
        let mut grads = t.backward(loss).unwrap();
        let grads = bound.gradients(&mut grads, &model.params);
        adam.step(model.params.tensors_mut(), &grads, config.lr).unwrap();
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn parameter_names_are_stable() {
    let model = Model::new(ModelConfig { n_blocks: 2, ..small_config(3) }, 0).unwrap();
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names[0], "block0.gcn.w");
    assert!(names.contains(&"block1.pool.attention.w_mat".to_string()));
    assert!(names.contains(&"block1.pool.fitness.w3".to_string()));
    assert_eq!(&names[names.len() - 4..], ["mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"]);
}
