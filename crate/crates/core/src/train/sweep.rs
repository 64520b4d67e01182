//! Grid sweeps over [`TrainConfig`] keys.
//!
//! A grid file uses the config syntax, but a value may list alternatives
//! separated by commas: `k = 0.25, 0.5, 0.75, 1.0`. Every combination runs
//! the full training protocol. A key given twice keeps its last line.

use std::path::Path;

use super::{train, Metrics, MetricsWriter, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    /// Every point of the grid, first axis varying slowest.
    pub fn points(&self) -> Result<Vec<(String, TrainConfig)>> {
        let mut points = vec![(Vec::<String>::new(), TrainConfig::default())];
        for (key, values) in &self.axes {
            let mut next = Vec::new();
            for (label, config) in &points {
                for v in values {
                    let mut c = config.clone();
                    c.set(key, v)?;
                    let mut l = label.clone();
                    if values.len() > 1 {
                        l.push(format!("{key}={v}"));
                    }
                    next.push((l, c));
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|(l, c)| {
                c.validate()?;
                Ok((if l.is_empty() { "base".to_string() } else { l.join(" ") }, c))
            })
            .collect()
    }
}

pub fn parse_grid(text: &str) -> Result<Grid> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, values)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!("grid line {}: expected key = v1, v2, ...", i + 1)));
        };
        let key = key.trim().to_string();
        if !super::KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidArgument(format!("grid line {}: unknown key {key:?}", i + 1)));
        }
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("grid line {}: no values for {key}", i + 1)));
        }
        match axes.iter_mut().find(|(k, _)| *k == key) {
            Some((_, vs)) => *vs = values,
            None => axes.push((key, values)),
        }
    }
    Ok(Grid { axes })
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub label: String,
    pub config: TrainConfig,
    pub metrics: Metrics,
}

/// Runs every grid point and returns rows sorted by mean validation
/// accuracy, best first. Metrics of point `i` go to `out_dir/point_i.csv`.
pub fn sweep(grid: &Grid, ds: &Dataset, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, (label, config)) in grid.points()?.into_iter().enumerate() {
        let mut writer = match out_dir {
            Some(dir) => Some(MetricsWriter::create(dir.join(format!("point_{i}.csv")))?),
            None => None,
        };
        let metrics = train(&config, ds, writer.as_mut(), &mut |_| Ok(()))?;
        rows.push(SweepRow { label, config, metrics });
    }
    rows.sort_by(|a, b| b.metrics.val().0.total_cmp(&a.metrics.val().0));
    Ok(rows)
}
