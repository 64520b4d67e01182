use std::collections::VecDeque;

use asap_core::autodiff::Tensor;
use asap_core::graph::Graph;
use asap_core::layers::AttentionKind;
use asap_core::pool::{AggregationMode, FitnessParams, PoolConfig, PoolParams};

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            for j in 0..m {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

pub fn dense_adjacency(g: &Graph) -> Mat {
    mat(&g.adjacency().to_dense())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

pub fn add_identity(a: &Mat) -> Mat {
    let mut out = a.clone();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    out
}

pub fn gcn_norm(a: &Mat) -> Mat {
    let hat = add_identity(a);
    let d: Vec<f64> = hat.iter().map(|r| r.iter().sum::<f64>().powf(-0.5)).collect();
    (0..a.len()).map(|i| (0..a.len()).map(|j| d[i] * hat[i][j] * d[j]).collect()).collect()
}

pub fn gcn(x: &Mat, a: &Mat, w: &Mat, act: fn(f64) -> f64) -> Mat {
    let out = mul(&mul(&gcn_norm(a), x), w);
    out.into_iter().map(|r| r.into_iter().map(act).collect()).collect()
}

/// Row-by-row evaluation of `x_i W1 + Σ_j A_ij (x_i W2 − x_j W3)`.
pub fn leconv(x: &Mat, a: &Mat, w1: &Mat, w2: &Mat, w3: &Mat, act: fn(f64) -> f64) -> Mat {
    let (xw1, xw2, xw3) = (mul(x, w1), mul(x, w2), mul(x, w3));
    let n = x.len();
    let m = w1[0].len();
    let mut out = zeros(n, m);
    for i in 0..n {
        for c in 0..m {
            let mut v = xw1[i][c];
            for j in 0..n {
                if a[i][j] != 0.0 {
                    v += a[i][j] * (xw2[i][c] - xw3[j][c]);
                }
            }
            out[i][c] = act(v);
        }
    }
    out
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn identity(x: f64) -> f64 {
    x
}

/// Hop distances by BFS on the dense matrix.
pub fn distances(a: &Mat) -> Vec<Vec<usize>> {
    let n = a.len();
    (0..n)
        .map(|s| {
            let mut d = vec![usize::MAX; n];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for v in 0..n {
                    if a[u][v] != 0.0 && d[v] == usize::MAX {
                        d[v] = d[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            d
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_times(v: &[f64], w: &Mat) -> Vec<f64> {
    (0..w[0].len()).map(|c| v.iter().enumerate().map(|(k, x)| x * w[k][c]).sum()).collect()
}

pub struct DensePool {
    pub xc: Option<Mat>,
    /// Node-by-cluster memberships.
    pub s: Option<Mat>,
    pub phi: Vec<f64>,
    pub selected: Vec<usize>,
    pub xp: Mat,
    pub ap: Mat,
}

/// Straight-line pooling of one graph.
pub fn pool(g: &Graph, params: &PoolParams, config: &PoolConfig) -> DensePool {
    let n = g.n_nodes();
    let a = dense_adjacency(g);
    let x = mat(g.features());
    let dist = distances(&a);

    let mut xc = None;
    let mut s = None;
    if config.aggregation != AggregationMode::None || config.soft_edges {
        let xq = gcn(&x, &a, &mat(&params.query.w), relu);
        let w = mat(&params.attention.w_mat);
        let v: Vec<f64> = params.attention.w_vec.data().to_vec();
        let d = xq[0].len();
        let mut sm = zeros(n, n);
        let mut xcm = zeros(n, x[0].len());
        for i in 0..n {
            let members: Vec<usize> = (0..n).filter(|&j| dist[i][j] <= config.h).collect();
            let scores: Vec<f64> = match params.attention.kind {
                AttentionKind::S2T => members.iter().map(|&j| leaky(dot(&row_times(&xq[j], &w), &v))).collect(),
                kind => {
                    let query: Vec<f64> = if kind == AttentionKind::T2T {
                        xq[i].clone()
                    } else {
                        (0..d).map(|c| members.iter().map(|&j| xq[j][c]).fold(f64::NEG_INFINITY, f64::max)).collect()
                    };
                    let q = dot(&row_times(&query, &w), &v[..d]);
                    members.iter().map(|&j| leaky(q + dot(&xq[j], &v[d..]))).collect()
                }
            };
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
            let z: f64 = e.iter().sum();
            for (m, &j) in members.iter().enumerate() {
                let alpha = e[m] / z;
                sm[j][i] = alpha;
                for c in 0..x[0].len() {
                    xcm[i][c] += alpha * x[j][c];
                }
            }
        }
        xc = Some(xcm);
        s = Some(sm);
    }

    let (feat, scored) = match (&xc, config.aggregation) {
        (Some(c), AggregationMode::Both) => (c.clone(), c.clone()),
        (Some(c), AggregationMode::OnlyCluster) => (c.clone(), x.clone()),
        _ => (x.clone(), x.clone()),
    };
    let phi_m = match &params.fitness {
        FitnessParams::Gcn(p) => gcn(&scored, &a, &mat(&p.w), sigmoid),
        FitnessParams::BasicLeConv(p) => {
            let w = mat(&p.w);
            leconv(&scored, &a, &w, &w, &w, sigmoid)
        }
        FitnessParams::LeConv(p) => leconv(&scored, &a, &mat(&p.w1), &mat(&p.w2), &mat(&p.w3), sigmoid),
    };
    let phi: Vec<f64> = phi_m.iter().map(|r| r[0]).collect();

    let keep = ((config.k * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| phi[q].partial_cmp(&phi[p]).unwrap().then(p.cmp(&q)));
    let selected: Vec<usize> = order[..keep.min(n)].to_vec();

    let xp: Mat = selected.iter().map(|&i| feat[i].iter().map(|v| v * phi[i]).collect()).collect();
    let mut ap = match (&s, config.soft_edges) {
        (Some(sm), true) => {
            let s_hat: Mat = (0..n).map(|j| selected.iter().map(|&i| sm[j][i]).collect()).collect();
            mul(&mul(&transpose(&s_hat), &add_identity(&a)), &s_hat)
        }
        _ => selected.iter().map(|&i| selected.iter().map(|&j| a[i][j]).collect()).collect(),
    };
    for (i, row) in ap.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    DensePool { xc, s, phi, selected, xp, ap }
}
