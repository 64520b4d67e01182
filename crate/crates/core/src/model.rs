//! Hierarchical classifier: GCN + ASAP blocks, summed mean‖max readouts, MLP head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, Gradients, Reduce, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::layers::{gcn_forward, glorot, normalize_gcn_var, GcnParams, ParamGroup};
use crate::pool::{asap_pool, PoolConfig, PoolParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub n_blocks: usize,
    pub dropout: f64,
    pub n_classes: usize,
    pub pool: PoolConfig,
}

impl ModelConfig {
    pub fn new(in_dim: usize, n_classes: usize) -> Self {
        ModelConfig { in_dim, hidden: 64, n_blocks: 3, dropout: 0.0, n_classes, pool: PoolConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("input and hidden widths must be positive".into()));
        }
        if self.n_blocks == 0 {
            return Err(Error::InvalidArgument("at least one GCN + pooling block is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        self.pool.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<P = Tensor> {
    pub gcn: GcnParams<P>,
    pub pool: PoolParams<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P = Tensor> {
    pub blocks: Vec<BlockParams<P>>,
    pub w1: P,
    pub b1: P,
    pub w2: P,
    pub b2: P,
}

impl<P> ParamGroup<P> for ModelParams<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.gcn.visit(&format!("{prefix}block{i}.gcn"), f);
            b.pool.visit(&format!("{prefix}block{i}.pool"), f);
        }
        f(format!("{prefix}mlp.w1"), &self.w1);
        f(format!("{prefix}mlp.b1"), &self.b1);
        f(format!("{prefix}mlp.w2"), &self.w2);
        f(format!("{prefix}mlp.b2"), &self.b2);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.gcn.visit_mut(&format!("{prefix}block{i}.gcn"), f);
            b.pool.visit_mut(&format!("{prefix}block{i}.pool"), f);
        }
        f(format!("{prefix}mlp.w1"), &mut self.w1);
        f(format!("{prefix}mlp.b1"), &mut self.b1);
        f(format!("{prefix}mlp.w2"), &mut self.w2);
        f(format!("{prefix}mlp.b2"), &mut self.b2);
    }
}

impl ModelParams {
    pub fn init<R: Rng>(rng: &mut R, config: &ModelConfig) -> Self {
        let d = config.hidden;
        let blocks = (0..config.n_blocks)
            .map(|i| BlockParams {
                gcn: GcnParams::init(rng, if i == 0 { config.in_dim } else { d }, d),
                pool: PoolParams::init(rng, &config.pool, d),
            })
            .collect();
        ModelParams {
            blocks,
            w1: glorot(rng, 2 * d, d),
            b1: Tensor::zeros(1, d),
            w2: glorot(rng, d, config.n_classes),
            b2: Tensor::zeros(1, config.n_classes),
        }
    }

    pub fn bind(&self, t: &mut Tape) -> ModelParams<Var> {
        ModelParams {
            blocks: self.blocks.iter().map(|b| BlockParams { gcn: b.gcn.bind(t), pool: b.pool.bind(t) }).collect(),
            w1: t.param(self.w1.clone()),
            b1: t.param(self.b1.clone()),
            w2: t.param(self.w2.clone()),
            b2: t.param(self.b2.clone()),
        }
    }

    /// Every tensor with its dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |_, t| out.push(t));
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

impl ModelParams<Var> {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.visit("", &mut |_, v| out.push(*v));
        out
    }

    /// Gradients in [`ModelParams::named`] order; unused parameters get zeros.
    pub fn gradients(&self, grads: &mut Gradients, like: &ModelParams) -> Vec<Tensor> {
        self.vars()
            .into_iter()
            .zip(like.named())
            .map(|(v, (_, p))| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
            .collect()
    }
}

/// Per-graph `[mean ‖ max]` of the node features.
pub fn readout(t: &mut Tape, x: Var, segment: &[usize], n_graphs: usize) -> Result<Var> {
    let mean = t.segment_reduce(Reduce::Mean, x, segment, n_graphs)?;
    let max = t.segment_reduce(Reduce::Max, x, segment, n_graphs)?;
    t.concat_cols(mean, max)
}

/// Training mode carries the dropout RNG.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

fn dropout(t: &mut Tape, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let Mode::Train(rng) = mode else { return Ok(x) };
    if rate == 0.0 {
        return Ok(x);
    }
    let (r, c) = t.shape(x);
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..r * c).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    let mask = t.constant(Tensor::from_vec(r, c, mask)?);
    t.hadamard(x, mask)
}

fn affine(t: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let rows = t.shape(x).0;
    let xw = t.matmul(x, w)?;
    let ones = t.constant(Tensor::ones(rows, 1));
    let bias = t.matmul(ones, b)?;
    t.add(xw, bias)
}

/// Logits `G x n_classes` for a batch, with parameters already on the tape.
pub fn forward_bound(
    t: &mut Tape,
    config: &ModelConfig,
    params: &ModelParams<Var>,
    batch: &GraphBatch,
    mut mode: Mode<'_>,
) -> Result<Var> {
    if batch.features.cols() != config.in_dim {
        return Err(Error::shape(
            "model",
            format!("batch has {} features, model expects {}", batch.features.cols(), config.in_dim),
        ));
    }
    let n_graphs = batch.n_graphs();
    let mut x = t.constant(batch.features.clone());
    let mut a = t.sparse_constant(&batch.adjacency);
    let mut segment = batch.segment.clone();
    let mut counts = batch.counts.clone();
    let mut summary: Option<Var> = None;
    for block in &params.blocks {
        let a_norm = normalize_gcn_var(t, &a)?;
        let h = gcn_forward(t, x, &a_norm, &block.gcn, Activation::Relu)?;
        let pooled = asap_pool(t, h, &a, &segment, &counts, &block.pool, &config.pool)?;
        let r = readout(t, pooled.x, &pooled.segment, n_graphs)?;
        summary = Some(match summary {
            Some(s) => t.add(s, r)?,
            None => r,
        });
        x = pooled.x;
        a = pooled.adjacency;
        segment = pooled.segment;
        counts = pooled.counts;
    }
    let summary = summary.expect("at least one block");
    let hidden = affine(t, summary, params.w1, params.b1)?;
    let hidden = t.relu(hidden)?;
    let hidden = dropout(t, hidden, config.dropout, &mut mode)?;
    affine(t, hidden, params.w2, params.b2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&mut rng, &config);
        Ok(Model { config, params })
    }

    /// Binds the parameters and runs the forward pass.
    pub fn forward(&self, t: &mut Tape, batch: &GraphBatch, mode: Mode<'_>) -> Result<(Var, ModelParams<Var>)> {
        let bound = self.params.bind(t);
        let logits = forward_bound(t, &self.config, &bound, batch, mode)?;
        Ok((logits, bound))
    }

    /// Eval-mode logits.
    pub fn logits(&self, batch: &GraphBatch) -> Result<Tensor> {
        let mut t = Tape::new();
        let (logits, _) = self.forward(&mut t, batch, Mode::Eval)?;
        Ok(t.value(logits).clone())
    }

    /// Eval-mode class predictions, lowest class on ties.
    pub fn predict(&self, batch: &GraphBatch) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect())
    }
}
