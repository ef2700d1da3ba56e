//! Compressed sparse row matrices.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A sparse matrix in compressed sparse row (CSR) format.
///
/// Within each row, column indices are strictly increasing and duplicate
/// triplet entries have been summed in their insertion order, so assembly is
/// bit-for-bit deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed in
    /// insertion order.  Explicit zeros are kept (they pin sparsity
    /// patterns; use [`SparseMatrix::pruned`] to drop them).
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols} matrix"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // Stable sort keeps insertion order among duplicates, making the
        // floating-point summation order deterministic.
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut row_counts = vec![0usize; n_rows];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for r in 0..n_rows {
            row_ptr[r + 1] = row_ptr[r] + row_counts[r];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// All-zero matrix (no stored entries).
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Diagonal matrix from a dense diagonal.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate stored entries in row-major (lexicographic) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    /// `self + alpha * other` (patterns may differ).
    pub fn add_scaled(&self, other: &SparseMatrix, alpha: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::invalid("matrix addition dimension mismatch"));
        }
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        triplets.extend(self.entries());
        triplets.extend(other.entries().map(|(r, c, v)| (r, c, alpha * v)));
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// Multiply all entries by `alpha`.
    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// Dense diagonal (length `min(n_rows, n_cols)`).
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n_rows.min(self.n_cols);
        let mut d = vec![0.0; n];
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    /// Copy without stored zeros.
    pub fn pruned(&self) -> SparseMatrix {
        let triplets: Vec<_> = self.entries().filter(|&(_, _, v)| v != 0.0).collect();
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets).unwrap()
    }

    /// Dense copy.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Submatrix with the given global row/column indices (which become
    /// local indices 0, 1, … in the given order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> SparseMatrix {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (local, &g) in cols.iter().enumerate() {
            col_map[g] = local;
        }
        let mut triplets = Vec::new();
        for (local_r, &g) in rows.iter().enumerate() {
            for k in self.row_ptr[g]..self.row_ptr[g + 1] {
                let lc = col_map[self.col_idx[k]];
                if lc != usize::MAX {
                    triplets.push((local_r, lc, self.values[k]));
                }
            }
        }
        SparseMatrix::from_triplets(rows.len(), cols.len(), &triplets).unwrap()
    }

    /// Maximum absolute symmetry defect `|A_ij − A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let dense = self.to_dense();
        let mut defect: f64 = 0.0;
        for r in 0..self.n_rows {
            for c in 0..r {
                defect = defect.max((dense[(r, c)] - dense[(c, r)]).abs());
            }
        }
        defect
    }

    /// Plain-text coordinate export: one `i j value` line per stored entry,
    /// 0-based indices in lexicographic (row, column) order, values with 17
    /// significant digits.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for (r, c, v) in self.entries() {
            let _ = writeln!(out, "{r} {c} {v:.16e}");
        }
        out
    }
}

/// Symmetric diagonal scaling `Â_ij = A_ij / sqrt(m_i m_j)` for a diagonal
/// mass matrix given by `m_diag`.  Fails if any diagonal entry is not
/// strictly positive.
pub fn sym_scale(m_diag: &[f64], a: &SparseMatrix) -> Result<SparseMatrix> {
    if m_diag.len() != a.n_rows() || a.n_rows() != a.n_cols() {
        return Err(Error::invalid("sym_scale dimension mismatch"));
    }
    if let Some((i, &d)) = m_diag.iter().enumerate().find(|&(_, &d)| d <= 0.0) {
        return Err(Error::Coefficient(format!(
            "sym_scale requires a positive diagonal mass matrix; entry {i} is {d:.3e}"
        )));
    }
    let inv_sqrt: Vec<f64> = m_diag.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut out = a.clone();
    for r in 0..out.n_rows {
        for k in out.row_ptr[r]..out.row_ptr[r + 1] {
            out.values[k] *= inv_sqrt[r] * inv_sqrt[out.col_idx[k]];
        }
    }
    Ok(out)
}
