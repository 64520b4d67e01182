//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pool::PoolConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub hidden: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub pool: PoolConfig,
    pub seed: u64,
    pub seeds: usize,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            hidden: 32,
            blocks: 3,
            dropout: 0.0,
            weight_decay: 5e-4,
            epochs: 100,
            lr_decay: 0.5,
            lr_decay_every: 50,
            batch_size: 32,
            pool: PoolConfig::default(),
            seed: 0,
            seeds: 3,
            folds: 10,
        }
    }
}

pub const KEYS: [&str; 18] = [
    "lr",
    "hidden",
    "blocks",
    "dropout",
    "weight_decay",
    "epochs",
    "lr_decay",
    "lr_decay_every",
    "batch_size",
    "k",
    "h",
    "attention",
    "fitness",
    "aggregation",
    "soft_edges",
    "seed",
    "seeds",
    "folds",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl TrainConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "lr" => self.lr = parse_num(key, value)?,
            "hidden" => self.hidden = parse_num(key, value)?,
            "blocks" => self.blocks = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "lr_decay" => self.lr_decay = parse_num(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "k" => self.pool.k = parse_num(key, value)?,
            "h" => self.pool.h = parse_num(key, value)?,
            "attention" => self.pool.attention = value.parse()?,
            "fitness" => self.pool.fitness = value.parse()?,
            "aggregation" => self.pool.aggregation = value.parse()?,
            "soft_edges" => self.pool.soft_edges = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "seeds" => self.seeds = parse_num(key, value)?,
            "folds" => self.folds = parse_num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lr" => self.lr.to_string(),
            "hidden" => self.hidden.to_string(),
            "blocks" => self.blocks.to_string(),
            "dropout" => self.dropout.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "k" => self.pool.k.to_string(),
            "h" => self.pool.h.to_string(),
            "attention" => self.pool.attention.to_string(),
            "fitness" => self.pool.fitness.to_string(),
            "aggregation" => self.pool.aggregation.to_string(),
            "soft_edges" => self.pool.soft_edges.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "folds" => self.folds.to_string(),
            _ => return None,
        })
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidArgument(format!("line {}: expected key = value, got {line:?}", i + 1)));
            };
            config.set(key, value).map_err(|e| Error::InvalidArgument(format!("line {}: {e}", i + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: 0, msg: e.to_string() })
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("every listed key has a value")).unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.hidden == 0 || self.blocks == 0 || self.epochs == 0 || self.batch_size == 0 || self.seeds == 0 {
            return bad("hidden, blocks, epochs, batch_size and seeds must be positive".into());
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 0.5], got {}", self.dropout));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_decay_every == 0 {
            return bad("lr_decay must lie in (0, 1] and lr_decay_every must be positive".into());
        }
        if self.folds < 3 {
            return bad(format!("folds must be at least 3, got {}", self.folds));
        }
        self.pool.validate()
    }

    /// Learning rate in effect during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch.saturating_sub(1) / self.lr_decay_every) as i32;
        self.lr * self.lr_decay.powi(halvings)
    }

    pub fn model_config(&self, in_dim: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden: self.hidden,
            n_blocks: self.blocks,
            dropout: self.dropout,
            n_classes,
            pool: self.pool,
        }
    }

    /// Short label of the ablation switches, e.g. `M2T/leconv/both/soft`.
    pub fn pool_label(&self) -> String {
        let p = &self.pool;
        format!("{}/{}/{}/{}", p.attention, p.fitness, p.aggregation, if p.soft_edges { "soft" } else { "hard" })
    }
}
