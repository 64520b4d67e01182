//! Cross-validated training: Adam, step-decayed learning rate, best-validation
//! model selection and per-epoch metrics.

mod adam;
mod checkpoint;
mod config;
mod kfold;
mod metrics;
mod sweep;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use config::{TrainConfig, KEYS};
pub use kfold::{kfold_split, Split};
pub use metrics::{mean_std, read_metrics, EpochRecord, FoldResult, Metrics, MetricsWriter, HEADER};
pub use sweep::{parse_grid, sweep, Grid, SweepRow};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{batch, Dataset, Graph};
use crate::model::{Mode, Model};

fn argmax(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
}

fn batches<'a>(ds: &'a Dataset, idx: &[usize], size: usize) -> impl Iterator<Item = Vec<&'a Graph>> + 'a {
    let chunks: Vec<Vec<usize>> = idx.chunks(size).map(<[usize]>::to_vec).collect();
    chunks.into_iter().map(move |c| c.iter().map(|&i| &ds.graphs()[i]).collect())
}

/// Eval-mode accuracy and mean loss over `indices`.
pub fn evaluate(model: &Model, ds: &Dataset, indices: &[usize], batch_size: usize) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty index set".into()));
    }
    let (mut correct, mut loss) = (0usize, 0.0);
    for graphs in batches(ds, indices, batch_size.max(1)) {
        let b = batch(&graphs)?;
        let labels = b.labels()?;
        let mut t = Tape::new();
        let (logits, _) = model.forward(&mut t, &b, Mode::Eval)?;
        let ce = t.cross_entropy(logits, &labels)?;
        loss += t.value(ce).item() * labels.len() as f64;
        let values = t.value(logits);
        correct += labels.iter().enumerate().filter(|&(r, &y)| argmax(values.row(r)) == y).count();
    }
    Ok((correct as f64 / indices.len() as f64, loss / indices.len() as f64))
}

fn run_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (fold as u64).wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Best-validation model of one fold with its scores.
pub struct FoldOutcome {
    pub result: FoldResult,
    pub model: Model,
}

/// Trains on `split.train` and keeps the epoch with the best validation
/// accuracy (lower validation loss breaks ties). `on_epoch` sees every row.
pub fn train_fold(
    config: &TrainConfig,
    ds: &Dataset,
    split: &Split,
    seed: u64,
    fold: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Result<()>,
) -> Result<FoldOutcome> {
    config.validate()?;
    let stream = run_seed(seed, fold);
    let mut model = Model::new(config.model_config(ds.feature_dim(), ds.n_classes()), stream)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream ^ 0x5DEE_CE66_D);
    let mut adam = Adam::new(config.weight_decay);
    let mut order = split.train.clone();
    let mut best: Option<(f64, f64, FoldResult, Model)> = None;
    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for graphs in batches(ds, &order, config.batch_size) {
            let b = batch(&graphs)?;
            let labels = b.labels()?;
            let mut t = Tape::new();
            let (logits, bound) = model.forward(&mut t, &b, Mode::Train(&mut rng))?;
            let loss = t.cross_entropy(logits, &labels)?;
            let value = t.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, fold, seed });
            }
            loss_sum += value * labels.len() as f64;
            let out = t.value(logits);
            correct += labels.iter().enumerate().filter(|&(r, &y)| argmax(out.row(r)) == y).count();
            let mut grads = t.backward(loss)?;
            let grads = bound.gradients(&mut grads, &model.params);
            adam.step(model.params.tensors_mut(), &grads, lr)?;
        }
        let (val_acc, val_loss) = evaluate(&model, ds, &split.val, config.batch_size)?;
        let (test_acc, _) = evaluate(&model, ds, &split.test, config.batch_size)?;
        let n = split.train.len() as f64;
        on_epoch(&EpochRecord {
            seed,
            fold,
            epoch,
            lr,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss,
            val_acc,
            test_acc,
        })?;
        let better = match &best {
            None => true,
            Some((acc, loss, _, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
        };
        if better {
            let result = FoldResult { seed, fold, best_epoch: epoch, val_acc, test_acc };
            best = Some((val_acc, val_loss, result, model.clone()));
        }
    }
    let (_, _, result, model) = best.expect("at least one epoch");
    Ok(FoldOutcome { result, model })
}

/// Full protocol: `config.seeds` seeds (consecutive from `config.seed`), each
/// with its own shuffled `config.folds`-fold split.
pub fn train(
    config: &TrainConfig,
    ds: &Dataset,
    mut writer: Option<&mut MetricsWriter>,
    on_fold: &mut dyn FnMut(&FoldOutcome) -> Result<()>,
) -> Result<Metrics> {
    config.validate()?;
    let mut metrics = Metrics::default();
    for s in 0..config.seeds as u64 {
        let seed = config.seed + s;
        let splits = kfold_split(ds.len(), config.folds, seed)?;
        for (fold, split) in splits.iter().enumerate() {
            let mut sink = |r: &EpochRecord| match writer.as_deref_mut() {
                Some(w) => w.record(r),
                None => Ok(()),
            };
            let outcome = train_fold(config, ds, split, seed, fold, &mut sink)?;
            on_fold(&outcome)?;
            metrics.runs.push(outcome.result);
        }
    }
    if let Some(w) = writer {
        w.summary(&metrics)?;
    }
    Ok(metrics)
}
