//! Reader and writer for the TU benchmark text format.
//!
//! A dataset `NAME` lives in one directory as:
//!
//! * `NAME_A.txt`: one `i, j` edge per line, 1-indexed global node ids
//! * `NAME_graph_indicator.txt`: the 1-indexed graph id of every node
//! * `NAME_graph_labels.txt`: one integer label per graph
//! * `NAME_node_labels.txt` (optional): one integer per node
//! * `NAME_node_attributes.txt` (optional): comma-separated floats per node

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{normalized_degree_features, Dataset, Graph};
use crate::autodiff::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Non-empty lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("cannot read: {e}"),
    })?;
    Ok(text.lines().enumerate().map(|(i, l)| (i + 1, l.trim().to_string())).filter(|(_, l)| !l.is_empty()).collect())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn parse_ints(path: &Path) -> Result<Vec<(usize, i64)>> {
    read_lines(path)?
        .into_iter()
        .map(|(ln, l)| {
            l.parse::<i64>()
                .map(|v| (ln, v))
                .map_err(|_| parse_err(path, ln, format!("expected an integer, got {l:?}")))
        })
        .collect()
}

fn parse_floats(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| parse_err(path, line, format!("bad float {t:?}"))))
        .collect()
}

/// Loads `name` from `dir`, building per-graph adjacency and features.
///
/// Features are node attributes when present, otherwise one-hot node
/// labels, otherwise degree normalised by the dataset maximum.
pub fn load_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let ind_path = file(dir, name, "graph_indicator");
    let indicator = parse_ints(&ind_path)?;
    let n_nodes = indicator.len();

    // node -> graph, plus node offset per graph; ids must run 1, 1.., 2, ...
    let mut node_graph = Vec::with_capacity(n_nodes);
    let mut graph_start: Vec<usize> = Vec::new();
    let mut prev = 0i64;
    for (node, &(ln, g)) in indicator.iter().enumerate() {
        if g == prev + 1 {
            graph_start.push(node);
            prev = g;
        } else if g != prev {
            return Err(parse_err(&ind_path, ln, format!("graph id {g} after {prev}: ids must be contiguous from 1")));
        }
        node_graph.push((g - 1) as usize);
    }
    let n_graphs = graph_start.len();
    graph_start.push(n_nodes);

    let lab_path = file(dir, name, "graph_labels");
    let raw_labels = parse_ints(&lab_path)?;
    if raw_labels.len() != n_graphs {
        return Err(parse_err(
            &lab_path,
            raw_labels.last().map_or(0, |x| x.0),
            format!("{} labels for {n_graphs} graphs", raw_labels.len()),
        ));
    }
    let classes: BTreeSet<i64> = raw_labels.iter().map(|x| x.1).collect();
    let class_index: BTreeMap<i64, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let a_path = file(dir, name, "A");
    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n_graphs];
    for (ln, l) in read_lines(&a_path)? {
        let mut parts = l.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(&a_path, ln, format!("expected \"i, j\", got {l:?}")));
        };
        let parse = |t: &str| -> Result<usize> {
            let v: usize = t.parse().map_err(|_| parse_err(&a_path, ln, format!("bad node id {t:?}")))?;
            if v == 0 || v > n_nodes {
                return Err(parse_err(&a_path, ln, format!("node {v} outside 1..={n_nodes}")));
            }
            Ok(v - 1)
        };
        let (a, b) = (parse(a)?, parse(b)?);
        let g = node_graph[a];
        if node_graph[b] != g {
            return Err(parse_err(&a_path, ln, format!("edge joins graphs {} and {}", g + 1, node_graph[b] + 1)));
        }
        if a != b {
            let off = graph_start[g];
            edges[g].insert((a - off, b - off));
            edges[g].insert((b - off, a - off));
        }
    }

    let attr_path = file(dir, name, "node_attributes");
    let nl_path = file(dir, name, "node_labels");
    let node_features: Option<Tensor> = if attr_path.exists() {
        let lines = read_lines(&attr_path)?;
        if lines.len() != n_nodes {
            return Err(parse_err(
                &attr_path,
                lines.last().map_or(0, |x| x.0),
                format!("{} rows for {n_nodes} nodes", lines.len()),
            ));
        }
        let rows: Vec<Vec<f64>> =
            lines.iter().map(|(ln, l)| parse_floats(&attr_path, *ln, l)).collect::<Result<_>>()?;
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(parse_err(&attr_path, lines[i].0, format!("{} attributes, expected {d}", rows[i].len())));
        }
        Some(Tensor::from_rows(&rows)?)
    } else if nl_path.exists() {
        let labels = parse_ints(&nl_path)?;
        if labels.len() != n_nodes {
            return Err(parse_err(
                &nl_path,
                labels.last().map_or(0, |x| x.0),
                format!("{} labels for {n_nodes} nodes", labels.len()),
            ));
        }
        let distinct: BTreeSet<i64> = labels.iter().map(|x| x.1).collect();
        let index: BTreeMap<i64, usize> = distinct.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut t = Tensor::zeros(n_nodes, distinct.len());
        for (node, (_, l)) in labels.iter().enumerate() {
            t.set(node, index[l], 1.0);
        }
        Some(t)
    } else {
        None
    };

    let mut graphs = Vec::with_capacity(n_graphs);
    for g in 0..n_graphs {
        let (start, end) = (graph_start[g], graph_start[g + 1]);
        let n = end - start;
        let triplets: Vec<_> = edges[g].iter().map(|&(a, b)| (a, b, 1.0)).collect();
        let adj = SparseMatrix::from_triplets(n, n, &triplets)?;
        let feats = match &node_features {
            Some(t) => t.select_rows(&(start..end).collect::<Vec<_>>()),
            None => Tensor::zeros(n, 1),
        };
        graphs.push(Graph::new(adj, feats, Some(class_index[&raw_labels[g].1]))?);
    }
    if node_features.is_none() {
        normalized_degree_features(&mut graphs);
    }
    Dataset::new(name, graphs, classes.len())
}

/// Writes a dataset in TU format, features as node attributes.
pub fn write_tu_dataset(ds: &Dataset, dir: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut a = BufWriter::new(fs::File::create(file(dir, name, "A"))?);
    let mut ind = BufWriter::new(fs::File::create(file(dir, name, "graph_indicator"))?);
    let mut lab = BufWriter::new(fs::File::create(file(dir, name, "graph_labels"))?);
    let mut attr = BufWriter::new(fs::File::create(file(dir, name, "node_attributes"))?);
    let mut offset = 0;
    for (gi, g) in ds.graphs().iter().enumerate() {
        for (r, c) in g.adjacency().pattern().coords() {
            writeln!(a, "{}, {}", r + offset + 1, c + offset + 1)?;
        }
        for i in 0..g.n_nodes() {
            writeln!(ind, "{}", gi + 1)?;
            let row: Vec<String> = g.features().row(i).iter().map(|v| v.to_string()).collect();
            writeln!(attr, "{}", row.join(", "))?;
        }
        writeln!(lab, "{}", g.label().expect("dataset graphs are labeled"))?;
        offset += g.n_nodes();
    }
    for w in [&mut a, &mut ind, &mut lab, &mut attr] {
        w.flush()?;
    }
    Ok(())
}

/// Summary counts of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub n_graphs: usize,
    pub n_classes: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
}

impl DatasetStats {
    pub fn of(ds: &Dataset) -> Self {
        let n = ds.len().max(1) as f64;
        DatasetStats {
            n_graphs: ds.len(),
            n_classes: ds.n_classes(),
            mean_nodes: ds.graphs().iter().map(|g| g.n_nodes() as f64).sum::<f64>() / n,
            mean_edges: ds.graphs().iter().map(|g| g.n_edges() as f64).sum::<f64>() / n,
        }
    }

    /// Graph and class counts match exactly; means to the table's two decimals.
    pub fn matches(&self, reference: &DatasetStats) -> bool {
        self.n_graphs == reference.n_graphs
            && self.n_classes == reference.n_classes
            && (self.mean_nodes - reference.mean_nodes).abs() <= 0.01
            && (self.mean_edges - reference.mean_edges).abs() <= 0.01
    }
}

/// Published statistics of the standard benchmark datasets.
pub fn known_stats(name: &str) -> Option<DatasetStats> {
    let (g, c, v, e) = match name.to_ascii_uppercase().as_str() {
        "DD" | "D&D" => (1178, 2, 284.32, 715.66),
        "PROTEINS" => (1113, 2, 39.06, 72.82),
        "NCI1" => (4110, 2, 29.87, 32.30),
        "NCI109" => (4127, 2, 29.68, 32.13),
        "FRANKENSTEIN" => (4337, 2, 16.90, 17.88),
        _ => return None,
    };
    Some(DatasetStats { n_graphs: g, n_classes: c, mean_nodes: v, mean_edges: e })
}
