use super::Mat;
use crate::error::{dims, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Rows stored as a dense per-column background plus sparse offsets.
///
/// Entry `(r, c)` equals `background[c] + offset(r, c)`, where only nonzero
/// offsets are stored. Column-standardized count data keeps this shape: zero
/// counts all map to the same per-column value.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    cols: usize,
    background: Vec<f64>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(m: &Mat) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in m.iter_rows() {
            for (c, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            cols: m.cols(),
            background: vec![0.0; m.cols()],
            indptr,
            indices,
            values,
        }
    }

    /// Applies `x ↦ (x − shift) * scale` column-wise.
    pub fn affine_columns(&self, shift: &[f64], scale: &[f64]) -> Result<Self> {
        dims("SparseRows::affine_columns shift", self.cols, shift.len())?;
        dims("SparseRows::affine_columns scale", self.cols, scale.len())?;
        let background = self
            .background
            .iter()
            .zip(shift.iter().zip(scale))
            .map(|(b, (s, k))| (b - s) * k)
            .collect();
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows() {
            for (c, v) in self.row(r) {
                let v = v * scale[c];
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            cols: self.cols,
            background,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    /// Stored offsets of row `r` as `(column, offset)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &r in idx {
            let span = self.indptr[r]..self.indptr[r + 1];
            indices.extend_from_slice(&self.indices[span.clone()]);
            values.extend_from_slice(&self.values[span]);
            indptr.push(indices.len());
        }
        Self {
            cols: self.cols,
            background: self.background.clone(),
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows(), self.cols);
        for r in 0..self.rows() {
            let row = m.row_mut(r);
            row.copy_from_slice(&self.background);
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        m
    }

    /// Column-major copy of the stored offsets: `(colptr, row ids, values)`.
    fn by_column(&self) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
        let mut colptr = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            colptr[c + 1] += 1;
        }
        for c in 0..self.cols {
            colptr[c + 1] += colptr[c];
        }
        let mut next = colptr.clone();
        let mut rows = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.rows() {
            for (c, v) in self.row(r) {
                let k = next[c];
                rows[k] = r as u32;
                vals[k] = v;
                next[c] += 1;
            }
        }
        (colptr, rows, vals)
    }

    /// `self · wᵀ` for a weight matrix `w` of shape `out × cols`.
    pub fn matmul_t(&self, w: &Mat) -> Result<Mat> {
        dims("SparseRows::matmul_t", self.cols, w.cols())?;
        let out = w.rows();
        let base = w.matvec(&self.background)?;
        let wt = w.transpose();
        let mut y = Mat::zeros(self.rows(), out);
        for r in 0..self.rows() {
            y.row_mut(r).copy_from_slice(&base);
        }
        // walk columns so the rows of `wt` stream in order
        let (colptr, rows, vals) = self.by_column();
        for c in 0..self.cols {
            let wc = wt.row(c);
            for k in colptr[c]..colptr[c + 1] {
                let v = vals[k];
                for (a, b) in y.row_mut(rows[k] as usize).iter_mut().zip(wc) {
                    *a += v * b;
                }
            }
        }
        Ok(y)
    }

    /// `deltaᵀ · self` for `delta` of shape `rows × out`; returns `out × cols`.
    pub fn t_left_matmul(&self, delta: &Mat) -> Result<Mat> {
        dims("SparseRows::t_left_matmul", self.rows(), delta.rows())?;
        let out = delta.cols();
        let dsum = delta.column_sums();
        let mut acc = Mat::zeros(self.cols, out);
        let (colptr, rows, vals) = self.by_column();
        for c in 0..self.cols {
            let bg = self.background[c];
            let a = acc.row_mut(c);
            if bg != 0.0 {
                for (a, s) in a.iter_mut().zip(&dsum) {
                    *a = bg * s;
                }
            }
            for k in colptr[c]..colptr[c + 1] {
                let v = vals[k];
                for (a, b) in a.iter_mut().zip(delta.row(rows[k] as usize)) {
                    *a += v * b;
                }
            }
        }
        Ok(acc.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn sparse_counts(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut r = RngStream::new(seed, 0);
        Mat::from_fn(rows, cols, |_, _| {
            if r.uniform() < 0.2 {
                (1 + r.below(4)) as f64
            } else {
                0.0
            }
        })
    }

    #[test]
    fn affine_matches_dense_transform() {
        let m = sparse_counts(6, 5, 1);
        let shift = [0.5, 1.0, 0.0, 2.0, 0.25];
        let scale = [2.0, 0.0, 1.0, 0.5, 3.0];
        let s = SparseRows::from_dense(&m).affine_columns(&shift, &scale).unwrap();
        let dense = Mat::from_fn(6, 5, |i, j| (m.get(i, j) - shift[j]) * scale[j]);
        assert!(s.to_dense().max_abs_diff(&dense) < 1e-12);
        // zero scale leaves nothing stored in that column
        assert!((0..6).all(|r| s.row(r).all(|(c, _)| c != 1)));
    }

    #[test]
    fn products_match_dense() {
        let m = sparse_counts(7, 9, 2);
        let s = SparseRows::from_dense(&m)
            .affine_columns(&[0.3; 9], &[1.5; 9])
            .unwrap();
        let d = s.to_dense();
        let mut r = RngStream::new(3, 0);
        let w = Mat::from_fn(4, 9, |_, _| r.uniform() - 0.5);
        let delta = Mat::from_fn(7, 4, |_, _| r.uniform() - 0.5);
        assert!(s.matmul_t(&w).unwrap().max_abs_diff(&d.matmul_t(&w).unwrap()) < 1e-12);
        let g = delta.t_matmul(&d).unwrap();
        assert!(s.t_left_matmul(&delta).unwrap().max_abs_diff(&g) < 1e-12);
        let sub = s.select_rows(&[4, 1]);
        assert_eq!(sub.to_dense().row(0), d.row(4));
    }
}
