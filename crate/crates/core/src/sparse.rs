//! Compressed sparse row storage for adjacency and commuting matrices.
//!
//! Only strictly positive values are stored and every `(row, col)` pair
//! appears at most once. Column indices are sorted within each row, so
//! iteration order is always row-major.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from coordinate triples.
    ///
    /// Duplicate coordinates are summed and zero results are dropped.
    /// Negative or non-finite values are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: n_rows,
                });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: n_cols,
                });
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) has invalid value {v}"
                )));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = SparseMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        };
        m.prune_zeros();
        Ok(m)
    }

    /// Row-major dense input; zeros are not stored.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "dense buffer of length {} for {n_rows}x{n_cols}",
                dense.len()
            )));
        }
        let triplets = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, &v)| (k / n_cols, k % n_cols, v))
            .collect();
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Row-major `(row, col, value)` iteration over stored entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.iter() {
            let slot = next[c];
            indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse product `self * rhs` (row-by-row accumulation into a dense scratch row).
    pub fn matmul(&self, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut acc = vec![0.0f64; rhs.n_cols];
        let mut touched = vec![false; rhs.n_cols];
        let mut pattern: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.n_rows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();

        for r in 0..self.n_rows {
            let (lcols, lvals) = self.row(r);
            for (&k, &a) in lcols.iter().zip(lvals) {
                let (rcols, rvals) = rhs.row(k);
                for (&c, &b) in rcols.iter().zip(rvals) {
                    if !touched[c] {
                        touched[c] = true;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                if acc[c] != 0.0 {
                    indices.push(c);
                    values.push(acc[c]);
                }
                acc[c] = 0.0;
                touched[c] = false;
            }
            pattern.clear();
            indptr.push(indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: rhs.n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }

    /// Writes row `r` into `out` (length `n_cols`), zero-filling gaps.
    pub fn write_dense_row(&self, r: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_cols);
        out.fill(0.0);
        let (cols, vals) = self.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            out[c] = v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for (r, c, v) in self.iter() {
            out[r * self.n_cols + c] = v;
        }
        out
    }

    /// Applies `f` to every stored value, dropping entries that map to zero.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SparseMatrix {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.values[k] = f(r, out.indices[k], out.values[k]);
            }
        }
        out.prune_zeros();
        out
    }
}
