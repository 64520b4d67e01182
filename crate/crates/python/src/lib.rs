//! Python bindings: graphs, datasets, the pooling operator, models,
//! training and the connectivity checks.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use asap_core::autodiff::Tensor;
use asap_core::graph::{self as core_graph, batch};
use asap_core::pool::{self, PoolConfig, PoolParams};
use asap_core::{model, theory, train};

fn to_py(e: asap_core::Error) -> PyErr {
    match e {
        asap_core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn tensor(rows: &[Vec<f64>]) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("feature rows must all have the same length"));
    }
    Tensor::from_vec(rows.len(), cols, rows.concat()).map_err(to_py)
}

#[pyclass(module = "asap_py", skip_from_py_object)]
#[derive(Clone)]
struct Graph {
    inner: core_graph::Graph,
}

#[pymethods]
impl Graph {
    /// Undirected unit-weight graph. Features default to a single column of ones.
    #[new]
    #[pyo3(signature = (n_nodes, edges, features=None, label=None))]
    fn new(n_nodes: usize, edges: Vec<(usize, usize)>, features: Option<Vec<Vec<f64>>>, label: Option<usize>) -> PyResult<Self> {
        let x = match features {
            Some(f) => tensor(&f)?,
            None => Tensor::ones(n_nodes, 1),
        };
        Ok(Graph { inner: core_graph::Graph::from_edges(n_nodes, &edges, x, label).map_err(to_py)? })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.inner.n_edges()
    }

    #[getter]
    fn label(&self) -> Option<usize> {
        self.inner.label()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edge_list()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.features())
    }

    fn adjacency(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.adjacency().to_dense())
    }

    /// Relabels node `i` as `perm[i]`.
    fn permute(&self, perm: Vec<usize>) -> PyResult<Self> {
        Ok(Graph { inner: core_graph::permute_graph(&self.inner, &perm).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("Graph(n_nodes={}, n_edges={}, label={:?})", self.inner.n_nodes(), self.inner.n_edges(), self.inner.label())
    }
}

#[pyclass(module = "asap_py")]
struct Dataset {
    inner: core_graph::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (n_graphs=200, seed=7))]
    fn synthetic(n_graphs: usize, seed: u64) -> PyResult<Self> {
        Ok(Dataset { inner: core_graph::synthetic_motif_dataset(n_graphs, seed).map_err(to_py)? })
    }

    /// Reads `NAME_A.txt`, `NAME_graph_indicator.txt`, ... from `dir`.
    #[staticmethod]
    fn load_tu(dir: PathBuf, name: &str) -> PyResult<Self> {
        Ok(Dataset { inner: core_graph::load_tu_dataset(dir, name).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    fn graph(&self, i: usize) -> PyResult<Graph> {
        let g = self.inner.graphs().get(i).ok_or_else(|| PyValueError::new_err(format!("no graph {i}")))?;
        Ok(Graph { inner: g.clone() })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(module = "asap_py", skip_from_py_object)]
#[derive(Clone)]
struct TrainConfig {
    inner: train::TrainConfig,
}

#[pymethods]
impl TrainConfig {
    /// Parses the flat `key = value` config format; empty text gives the defaults.
    #[new]
    #[pyo3(signature = (text=""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(TrainConfig { inner: train::TrainConfig::parse(text).map_err(to_py)? })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)?;
        self.inner.validate().map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig({:?})", self.inner.to_text())
    }
}

#[pyclass(module = "asap_py")]
struct Model {
    inner: model::Model,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (config, in_dim, n_classes, seed=0))]
    fn new(config: PyRef<'_, TrainConfig>, in_dim: usize, n_classes: usize, seed: u64) -> PyResult<Self> {
        let inner = model::Model::new(config.inner.model_config(in_dim, n_classes), seed).map_err(to_py)?;
        Ok(Model { inner })
    }

    /// Class logits, one row per graph.
    fn logits(&self, graphs: Vec<PyRef<'_, Graph>>) -> PyResult<Vec<Vec<f64>>> {
        let refs: Vec<&core_graph::Graph> = graphs.iter().map(|g| &g.inner).collect();
        let b = batch(&refs).map_err(to_py)?;
        Ok(rows(&self.inner.logits(&b).map_err(to_py)?))
    }

    fn n_parameters(&self) -> usize {
        self.inner.params.named().iter().map(|(_, t)| t.rows() * t.cols()).sum()
    }

    fn save(&self, path: PathBuf, config: PyRef<'_, TrainConfig>) -> PyResult<()> {
        train::save_checkpoint(path, &config.inner, &self.inner).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(TrainConfig, Model)> {
        let (config, model) = train::load_checkpoint(path).map_err(to_py)?;
        Ok((TrainConfig { inner: config }, Model { inner: model }))
    }
}

/// One ASAP pooling step with freshly initialised parameters.
#[pyfunction]
#[pyo3(signature = (graph, k=0.5, h=1, attention="M2T", fitness="leconv", aggregation="both", soft_edges=true, seed=0))]
#[allow(clippy::too_many_arguments)]
fn pool_graph<'py>(
    py: Python<'py>,
    graph: PyRef<'_, Graph>,
    k: f64,
    h: usize,
    attention: &str,
    fitness: &str,
    aggregation: &str,
    soft_edges: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = PoolConfig {
        k,
        h,
        attention: attention.parse().map_err(to_py)?,
        fitness: fitness.parse().map_err(to_py)?,
        aggregation: aggregation.parse().map_err(to_py)?,
        soft_edges,
    };
    config.validate().map_err(to_py)?;
    let params = PoolParams::init(&mut ChaCha8Rng::seed_from_u64(seed), &config, graph.inner.feature_dim());
    let out = pool::pool_graph(&graph.inner, &params, &config).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("x", rows(&out.x))?;
    d.set_item("adjacency", rows(&out.adjacency.to_dense()))?;
    d.set_item("selected", out.selected)?;
    d.set_item("fitness", out.fitness.data().to_vec())?;
    Ok(d)
}

/// Runs the full k-fold protocol and returns the summary and per-fold results.
#[pyfunction]
fn train_model<'py>(py: Python<'py>, dataset: PyRef<'_, Dataset>, config: PyRef<'_, TrainConfig>) -> PyResult<Bound<'py, PyDict>> {
    let metrics = train::train(&config.inner, &dataset.inner, None, &mut |_| Ok(())).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("test", metrics.test())?;
    d.set_item("val", metrics.val())?;
    let runs: Vec<(u64, usize, usize, f64, f64)> =
        metrics.runs.iter().map(|r| (r.seed, r.fold, r.best_epoch, r.val_acc, r.test_acc)).collect();
    d.set_item("runs", runs)?;
    d.set_item("summary", metrics.summary_line())?;
    Ok(d)
}

/// `(n_star, witness)`: the most nodes pairwise at least `h` hops apart.
#[pyfunction]
fn optimum_nodes(graph: PyRef<'_, Graph>, h: usize) -> PyResult<(usize, Vec<usize>)> {
    let r = theory::optimum_nodes_bruteforce(&graph.inner, h).map_err(to_py)?;
    Ok((r.n_star, r.witness))
}

/// Closed form for `family` in {"path", "starlike"}.
#[pyfunction]
fn closed_form_optimum(family: &str, n: usize, h: usize) -> PyResult<usize> {
    let family = match family {
        "path" => theory::Family::Path,
        "starlike" | "balanced_starlike" | "star" => theory::Family::BalancedStarlike,
        other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    };
    theory::closed_form_optimum(family, n, h).map_err(to_py)
}

/// `(m, N)` for the smallest safe sampling ratio, or None.
#[pyfunction]
fn min_sampling_ratio(graph: PyRef<'_, Graph>, rf_edge: usize) -> PyResult<Option<(usize, usize)>> {
    Ok(theory::min_sampling_ratio(&graph.inner, rf_edge).map_err(to_py)?.map(|r| (r.m, r.n)))
}

#[pyfunction]
#[pyo3(signature = (trials=100, seed=0))]
fn verify_equivariance<'py>(py: Python<'py>, trials: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = theory::verify_equivariance(trials, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("trials", r.trials)?;
    d.set_item("passed", r.passed)?;
    d.set_item("max_error", r.max_error)?;
    d.set_item("redrawn", r.resampled)?;
    Ok(d)
}

/// `(topk_reach, asap_reach)` for power `p` and cluster radius `h`.
#[pyfunction]
fn graph_power_reach(graph: PyRef<'_, Graph>, p: usize, h: usize) -> PyResult<(usize, usize)> {
    let r = theory::verify_graph_power(&graph.inner, p, h).map_err(to_py)?;
    Ok((r.topk_reach, r.asap_reach))
}

#[pymodule]
fn asap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<TrainConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(pool_graph, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(optimum_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(min_sampling_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(verify_equivariance, m)?)?;
    m.add_function(wrap_pyfunction!(graph_power_reach, m)?)?;
    Ok(())
}
