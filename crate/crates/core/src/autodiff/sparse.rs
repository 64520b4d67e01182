use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Structure of a sparse matrix: coordinates in canonical (row, col) order
/// with CSR row offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    row_ptr: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from coordinates that are already sorted and unique.
    fn from_sorted(n_rows: usize, n_cols: usize, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let mut row_ptr = vec![0; n_rows + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparsePattern { n_rows, n_cols, rows, cols, row_ptr }
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self::from_sorted(n_rows, n_cols, Vec::new(), Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted(n, n, (0..n).collect(), (0..n).collect())
    }

    /// Sorts and validates coordinates. Returns the pattern and, for every
    /// input coordinate, its position in the canonical order.
    pub fn from_coords(n_rows: usize, n_cols: usize, coords: &[(usize, usize)]) -> Result<(Self, Vec<usize>)> {
        for &(r, c) in coords {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidArgument(format!("entry ({r}, {c}) outside a {n_rows}x{n_cols} matrix")));
            }
        }
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_by_key(|&i| coords[i]);
        for w in order.windows(2) {
            if coords[w[0]] == coords[w[1]] {
                let (r, c) = coords[w[0]];
                return Err(Error::InvalidArgument(format!("duplicate entry ({r}, {c})")));
            }
        }
        let mut position = vec![0; coords.len()];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }
        let rows = order.iter().map(|&i| coords[i].0).collect();
        let cols = order.iter().map(|&i| coords[i].1).collect();
        Ok((Self::from_sorted(n_rows, n_cols, rows, cols), position))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Entry positions belonging to row `r`.
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row_range(r);
        self.cols[range.clone()].binary_search(&c).ok().map(|p| range.start + p)
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    /// Transposed pattern and, for each of its entries, the source entry.
    pub fn transpose(&self) -> (SparsePattern, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.nnz()).collect();
        order.sort_by_key(|&k| (self.cols[k], self.rows[k]));
        let rows = order.iter().map(|&k| self.cols[k]).collect();
        let cols = order.iter().map(|&k| self.rows[k]).collect();
        (Self::from_sorted(self.n_cols, self.n_rows, rows, cols), order)
    }

    /// Symbolic product `self * other`: output pattern plus every
    /// contributing `(out, self_entry, other_entry)` triple.
    pub fn product(&self, other: &SparsePattern) -> Result<(SparsePattern, Vec<(usize, usize, usize)>)> {
        if self.n_cols != other.n_rows {
            return Err(Error::shape(
                "sparse product",
                format!("{}x{} * {}x{}", self.n_rows, self.n_cols, other.n_rows, other.n_cols),
            ));
        }
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut terms = Vec::new();
        // dense marker per output column, reset per row
        let mut slot: Vec<usize> = vec![usize::MAX; other.n_cols];
        let mut row_terms: Vec<(usize, usize, usize)> = Vec::new();
        for i in 0..self.n_rows {
            row_terms.clear();
            let mut touched: Vec<usize> = Vec::new();
            for a in self.row_range(i) {
                let mid = self.cols[a];
                for b in other.row_range(mid) {
                    let j = other.cols[b];
                    if slot[j] == usize::MAX {
                        slot[j] = 0;
                        touched.push(j);
                    }
                    row_terms.push((j, a, b));
                }
            }
            touched.sort_unstable();
            let base = rows.len();
            for (p, &j) in touched.iter().enumerate() {
                slot[j] = base + p;
                rows.push(i);
                cols.push(j);
            }
            for &(j, a, b) in &row_terms {
                terms.push((slot[j], a, b));
            }
            for &j in &touched {
                slot[j] = usize::MAX;
            }
        }
        Ok((Self::from_sorted(self.n_rows, other.n_cols, rows, cols), terms))
    }

    /// Union with the diagonal. Returns the new pattern and, for each new
    /// entry, the index of the old entry it came from (if any).
    pub fn with_diagonal(&self) -> Result<(SparsePattern, Vec<Option<usize>>)> {
        if self.n_rows != self.n_cols {
            return Err(Error::shape("add identity", format!("{}x{} is not square", self.n_rows, self.n_cols)));
        }
        let mut rows = Vec::with_capacity(self.nnz() + self.n_rows);
        let mut cols = Vec::with_capacity(self.nnz() + self.n_rows);
        let mut source = Vec::with_capacity(self.nnz() + self.n_rows);
        for i in 0..self.n_rows {
            let mut diag_done = false;
            for k in self.row_range(i) {
                let j = self.cols[k];
                if !diag_done && j >= i {
                    if j > i {
                        rows.push(i);
                        cols.push(i);
                        source.push(None);
                    }
                    diag_done = true;
                }
                rows.push(i);
                cols.push(j);
                source.push(Some(k));
            }
            if !diag_done {
                rows.push(i);
                cols.push(i);
                source.push(None);
            }
        }
        Ok((Self::from_sorted(self.n_rows, self.n_cols, rows, cols), source))
    }

    /// Keeps the entries for which `keep` holds and renumbers rows/cols
    /// through the given maps (entries whose row or col maps to `None`
    /// are dropped). Returns the new pattern and the kept source entries.
    pub fn filter_map(
        &self,
        n_rows: usize,
        n_cols: usize,
        row_map: impl Fn(usize) -> Option<usize>,
        col_map: impl Fn(usize) -> Option<usize>,
        keep: impl Fn(usize, usize) -> bool,
    ) -> (SparsePattern, Vec<usize>) {
        let mut entries: Vec<(usize, usize, usize)> = Vec::new();
        for (k, (r, c)) in self.coords().enumerate() {
            if !keep(r, c) {
                continue;
            }
            if let (Some(nr), Some(nc)) = (row_map(r), col_map(c)) {
                entries.push((nr, nc, k));
            }
        }
        entries.sort_unstable();
        let rows = entries.iter().map(|e| e.0).collect();
        let cols = entries.iter().map(|e| e.1).collect();
        let src = entries.iter().map(|e| e.2).collect();
        (Self::from_sorted(n_rows, n_cols, rows, cols), src)
    }
}

/// Sparse matrix with `f64` values over a shared [`SparsePattern`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(pattern: Arc<SparsePattern>, values: Vec<f64>) -> Result<Self> {
        if pattern.nnz() != values.len() {
            return Err(Error::shape(
                "sparse matrix",
                format!("{} values for {} entries", values.len(), pattern.nnz()),
            ));
        }
        Ok(SparseMatrix { pattern, values })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are an error.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let coords: Vec<(usize, usize)> = triplets.iter().map(|&(r, c, _)| (r, c)).collect();
        let (pattern, position) = SparsePattern::from_coords(n_rows, n_cols, &coords)?;
        let mut values = vec![0.0; triplets.len()];
        for (i, &(_, _, v)) in triplets.iter().enumerate() {
            values[position[i]] = v;
        }
        Ok(SparseMatrix { pattern: Arc::new(pattern), values })
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix { pattern: Arc::new(SparsePattern::empty(n_rows, n_cols)), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix { pattern: Arc::new(SparsePattern::identity(n)), values: vec![1.0; n] }
    }

    pub fn from_dense(dense: &Tensor) -> Self {
        let mut triplets = Vec::new();
        for r in 0..dense.rows() {
            for c in 0..dense.cols() {
                let v = dense.get(r, c);
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dense.rows(), dense.cols(), &triplets).expect("dense coordinates are unique")
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.find(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pattern.coords().zip(self.values.iter().copied()).map(|((r, c), v)| (r, c, v))
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.n_rows(), self.n_cols());
        for (r, c, v) in self.triplets() {
            out.set(r, c, v);
        }
        out
    }

    /// Constant product with a dense matrix (no tape).
    pub fn matmul_dense(&self, d: &Tensor) -> Result<Tensor> {
        if self.n_cols() != d.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} * {}x{}", self.n_rows(), self.n_cols(), d.rows(), d.cols()),
            ));
        }
        let mut out = Tensor::zeros(self.n_rows(), d.cols());
        for (r, c, v) in self.triplets() {
            let src = d.row(c).to_vec();
            for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                *o += v * s;
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows() == self.n_cols() && self.triplets().all(|(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        for (r, _, v) in self.triplets() {
            out[r] += v;
        }
        out
    }
}
