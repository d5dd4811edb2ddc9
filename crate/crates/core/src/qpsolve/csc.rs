use alloc::vec;
use alloc::vec::Vec;

use super::QpError;
use crate::math;

/// Compressed sparse column matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix { nrows: n, ncols: n, col_ptr: (0..=n).collect(), row_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that cancel to exactly zero are dropped; rows are sorted
    /// within each column.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, QpError> {
        let mut count = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(QpError::OutOfRange { row: r, col: c, nrows, ncols });
            }
            count[c + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for j in 0..ncols {
            order.clear();
            order.extend(count[j]..count[j + 1]);
            order.sort_by_key(|&k| rows[k]);
            let mut k = 0;
            while k < order.len() {
                let r = rows[order[k]];
                let mut v = 0.0;
                while k < order.len() && rows[order[k]] == r {
                    v += vals[order[k]];
                    k += 1;
                }
                if v != 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(CscMatrix { nrows, ncols, col_ptr, row_idx, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entries of column `j` as `(row, value)`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.col(j).filter(|&(r, _)| r == i).map(|(_, v)| v).sum()
    }

    /// `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            out.extend(self.col(j).map(|(i, v)| (i, j, v)));
        }
        out
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn mul_t_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for j in 0..self.ncols {
            let mut s = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                s += self.values[p] * x[self.row_idx[p]];
            }
            y[j] = s;
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.row_idx {
            count[r + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.row_idx[p];
                row_idx[next[r]] = j;
                values[next[r]] = self.values[p];
                next[r] += 1;
            }
        }
        CscMatrix { nrows: self.ncols, ncols: self.nrows, col_ptr: count, row_idx, values }
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[&CscMatrix]) -> CscMatrix {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        assert!(blocks.iter().all(|b| b.ncols == ncols), "vstack column mismatch");
        let nrows = blocks.iter().map(|b| b.nrows).sum();
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..ncols {
            let mut off = 0;
            for b in blocks {
                for (i, v) in b.col(j) {
                    row_idx.push(i + off);
                    values.push(v);
                }
                off += b.nrows;
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix { nrows, ncols, col_ptr, row_idx, values }
    }

    /// Replaces `A` with `diag(row) A diag(col)`.
    pub fn scale(&mut self, row: &[f64], col: &[f64]) {
        for j in 0..self.ncols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                self.values[p] *= row[self.row_idx[p]] * col[j];
            }
        }
    }

    pub fn col_norms_inf(&self) -> Vec<f64> {
        (0..self.ncols).map(|j| self.col(j).fold(0.0f64, |m, (_, v)| m.max(math::abs(v)))).collect()
    }

    pub fn row_norms_inf(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (p, &r) in self.row_idx.iter().enumerate() {
            out[r] = out[r].max(math::abs(self.values[p]));
        }
        out
    }

    /// Rows selected in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CscMatrix {
        let mut map = vec![usize::MAX; self.nrows];
        for (k, &r) in rows.iter().enumerate() {
            map[r] = k;
        }
        let mut trip = Vec::new();
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                if map[i] != usize::MAX {
                    trip.push((map[i], j, v));
                }
            }
        }
        CscMatrix::from_triplets(rows.len(), self.ncols, &trip).expect("row selection in range")
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
        let t = self.transpose();
        for j in 0..self.ncols {
            let a: Vec<(usize, f64)> = self.col(j).collect();
            let b: Vec<(usize, f64)> = t.col(j).collect();
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let (ra, va) = a.get(p).copied().unwrap_or((usize::MAX, 0.0));
                let (rb, vb) = b.get(q).copied().unwrap_or((usize::MAX, 0.0));
                let diff = if ra == rb {
                    p += 1;
                    q += 1;
                    va - vb
                } else if ra < rb {
                    p += 1;
                    va
                } else {
                    q += 1;
                    vb
                };
                if math::abs(diff) > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }
}
