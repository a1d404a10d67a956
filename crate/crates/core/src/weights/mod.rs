//! Sparse spatial weight matrices.
//!
//! Weights are stored in compressed sparse row order (rows ascending, columns
//! ascending within a row). Diagonal entries are never stored. Values are
//! immutable once constructed, so a [`SpatialWeights`] can be shared freely
//! between threads.

mod io;

pub use io::{load_weights, parse_edge_list, parse_gal, write_edge_list, write_gal, WeightsFormat};

use nalgebra::DMatrix;

use crate::error::{GsarError, Result};

/// Tolerance used to decide whether a row already sums to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_standardized: bool,
}

impl SpatialWeights {
    /// Builds a weight matrix from 0-based `(row, col, weight)` triplets.
    ///
    /// Triplets may arrive in any order. Diagonal entries, negative or
    /// non-finite weights, out-of-range indices and duplicated pairs are
    /// rejected.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n < 2 {
            return Err(GsarError::Validation(format!("weights need n >= 2, got {n}")));
        }
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, w) in &entries {
            if i >= n || j >= n {
                return Err(GsarError::Validation(format!(
                    "entry ({}, {}) outside a {n}x{n} matrix",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(GsarError::Validation(format!("diagonal entry ({0}, {0}) is not allowed", i + 1)));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(GsarError::Validation(format!(
                    "weight {w} at ({}, {}) must be finite and nonnegative",
                    i + 1,
                    j + 1
                )));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        if let Some(pair) = entries.windows(2).find(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1) {
            return Err(GsarError::Validation(format!(
                "duplicate entry ({}, {})",
                pair[0].0 + 1,
                pair[0].1 + 1
            )));
        }

        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            row_standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored (off-diagonal) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_row_standardized(&self) -> bool {
        self.row_standardized
    }

    /// Iterates over `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Iterates over all stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    /// Rows without any neighbour ("islands").
    pub fn empty_rows(&self) -> usize {
        (0..self.n).filter(|&i| self.neighbor_count(i) == 0).count()
    }

    /// Divides every nonempty row by its sum. Empty rows stay empty; their
    /// count is available through [`SpatialWeights::empty_rows`].
    pub fn row_standardize(&self) -> SpatialWeights {
        if self.row_standardized {
            return self.clone();
        }
        let mut out = self.clone();
        for i in 0..self.n {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            let sum: f64 = self.values[span.clone()].iter().sum();
            if sum > 0.0 {
                for w in &mut out.values[span] {
                    *w /= sum;
                }
            }
        }
        out.row_standardized = true;
        out
    }

    /// `W v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must equal n");
        (0..self.n).map(|i| self.row(i).map(|(j, w)| w * v[j]).sum()).collect()
    }

    /// `Wᵀ v`.
    pub fn mul_vec_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must equal n");
        let mut out = vec![0.0; self.n];
        for (i, j, w) in self.entries() {
            out[j] += w * v[i];
        }
        out
    }

    /// True when `i ~ j` implies `j ~ i` (values may differ).
    pub fn is_pattern_symmetric(&self) -> bool {
        self.entries().all(|(i, j, _)| {
            let span = self.row_ptr[j]..self.row_ptr[j + 1];
            self.col_idx[span].binary_search(&i).is_ok()
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, w) in self.entries() {
            m[(i, j)] = w;
        }
        m
    }

    /// Symmetrized adjacency lists (neighbours in either direction), sorted.
    pub(crate) fn symmetric_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j, _) in self.entries() {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Binary rook (edge-sharing) adjacency on a `rows x cols` lattice, numbered
/// row-major. Not standardized.
pub fn rook_adjacency(rows: usize, cols: usize) -> Result<SpatialWeights> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(GsarError::Validation(format!(
            "rook grid needs at least two cells, got {rows}x{cols}"
        )));
    }
    let mut triplets = Vec::with_capacity(4 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if r > 0 {
                triplets.push((i, i - cols, 1.0));
            }
            if c > 0 {
                triplets.push((i, i - 1, 1.0));
            }
            if c + 1 < cols {
                triplets.push((i, i + 1, 1.0));
            }
            if r + 1 < rows {
                triplets.push((i, i + cols, 1.0));
            }
        }
    }
    SpatialWeights::from_triplets(rows * cols, triplets)
}

/// Row-standardized rook contiguity on a regular grid.
pub fn build_rook_grid(rows: usize, cols: usize) -> Result<SpatialWeights> {
    Ok(rook_adjacency(rows, cols)?.row_standardize())
}
