//! Per-epoch CSV metrics with a trailing `mean±std` summary line.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: [&str; 9] =
    ["seed", "fold", "epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc", "test_acc"];

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub seed: u64,
    pub fold: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Outcome of one (seed, fold) run at its best-validation epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub runs: Vec<FoldResult>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Metrics {
    pub fn test(&self) -> (f64, f64) {
        mean_std(&self.runs.iter().map(|r| r.test_acc).collect::<Vec<_>>())
    }

    pub fn val(&self) -> (f64, f64) {
        mean_std(&self.runs.iter().map(|r| r.val_acc).collect::<Vec<_>>())
    }

    /// Mean over folds within each seed, one value per seed.
    pub fn per_seed_test(&self) -> Vec<(u64, f64)> {
        let mut seeds: Vec<u64> = self.runs.iter().map(|r| r.seed).collect();
        seeds.dedup();
        seeds
            .into_iter()
            .map(|s| {
                let v: Vec<f64> = self.runs.iter().filter(|r| r.seed == s).map(|r| r.test_acc).collect();
                (s, mean_std(&v).0)
            })
            .collect()
    }

    pub fn summary_line(&self) -> String {
        let (tm, ts) = self.test();
        let (vm, vs) = self.val();
        format!("# test_acc mean±std: {tm:.4}±{ts:.4}; val_acc mean±std: {vm:.4}±{vs:.4}; runs: {}", self.runs.len())
    }
}

pub struct MetricsWriter {
    inner: csv::Writer<File>,
    // shares the file offset with `inner`, for the free-form summary line
    raw: File,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        if let Some(dir) = path.as_ref().parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = File::create(path)?;
        let raw = file.try_clone()?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(MetricsWriter { inner, raw })
    }

    /// Appends one row and flushes it to disk.
    pub fn record(&mut self, r: &EpochRecord) -> Result<()> {
        self.inner.write_record([
            r.seed.to_string(),
            r.fold.to_string(),
            r.epoch.to_string(),
            r.lr.to_string(),
            r.train_loss.to_string(),
            r.train_acc.to_string(),
            r.val_loss.to_string(),
            r.val_acc.to_string(),
            r.test_acc.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn summary(&mut self, metrics: &Metrics) -> Result<()> {
        self.inner.flush()?;
        writeln!(self.raw, "{}", metrics.summary_line())?;
        self.raw.flush()?;
        Ok(())
    }
}

/// Reads the epoch rows back, skipping the summary line.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| {
            row.get(i).ok_or_else(|| Error::InvalidArgument(format!("metrics row has {} fields", row.len())))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|_| Error::InvalidArgument(format!("bad number in column {}", HEADER[i])))
        };
        out.push(EpochRecord {
            seed: num(0)? as u64,
            fold: num(1)? as usize,
            epoch: num(2)? as usize,
            lr: num(3)?,
            train_loss: num(4)?,
            train_acc: num(5)?,
            val_loss: num(6)?,
            val_acc: num(7)?,
            test_acc: num(8)?,
        });
    }
    Ok(out)
}
