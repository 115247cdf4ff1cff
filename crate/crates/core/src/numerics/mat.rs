use crate::error::{dims, Error, Result};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMat")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMat> for Mat {
    type Error = Error;

    fn try_from(m: RawMat) -> Result<Self> {
        Self::from_vec(m.rows, m.cols, m.data)
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        dims("Mat::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            dims("Mat::from_rows", cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        const TILE: usize = 32;
        let (r, c) = (self.rows, self.cols);
        let mut t = Mat::zeros(c, r);
        for i0 in (0..r).step_by(TILE) {
            for j0 in (0..c).step_by(TILE) {
                for i in i0..(i0 + TILE).min(r) {
                    let src = &self.data[i * c..(i + 1) * c];
                    for j in j0..(j0 + TILE).min(c) {
                        t.data[j * r + i] = src[j];
                    }
                }
            }
        }
        t
    }

    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Horizontal concatenation of blocks with equal row counts.
    pub fn hcat(blocks: &[&Mat]) -> Result<Mat> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        for b in blocks {
            dims("Mat::hcat rows", rows, b.rows)?;
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Mat) -> Result<()> {
        dims("Mat::axpy rows", self.rows, other.rows)?;
        dims("Mat::axpy cols", self.cols, other.cols)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    /// Adds `v` to every row.
    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<()> {
        dims("Mat::add_row_vector", self.cols, v.len())?;
        for i in 0..self.rows {
            for (a, b) in self.row_mut(i).iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (a, b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        s
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        dims("Mat::matvec", self.cols, v.len())?;
        Ok(self.iter_rows().map(|r| super::dot(r, v)).collect())
    }

    /// `self * other`
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        dims("Mat::matmul inner", self.cols, other.rows)?;
        let mut c = Mat::zeros(self.rows, other.cols);
        gemm(self, false, other, false, 1.0, 0.0, &mut c);
        Ok(c)
    }

    /// `selfᵀ * other`
    pub fn t_matmul(&self, other: &Mat) -> Result<Mat> {
        dims("Mat::t_matmul inner", self.rows, other.rows)?;
        let mut c = Mat::zeros(self.cols, other.cols);
        gemm(self, true, other, false, 1.0, 0.0, &mut c);
        Ok(c)
    }

    /// `self * otherᵀ`
    pub fn matmul_t(&self, other: &Mat) -> Result<Mat> {
        dims("Mat::matmul_t inner", self.cols, other.cols)?;
        let mut c = Mat::zeros(self.rows, other.rows);
        gemm(self, false, other, true, 1.0, 0.0, &mut c);
        Ok(c)
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, context: &'static str, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::DimensionMismatch {
                context,
                expected: rows * cols,
                actual: self.rows * self.cols,
            });
        }
        Ok(())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, shapes already validated by the caller.
pub(crate) fn gemm(a: &Mat, ta: bool, b: &Mat, tb: bool, alpha: f64, beta: f64, c: &mut Mat) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    debug_assert_eq!(c.rows, m);
    debug_assert_eq!(c.cols, n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale(beta);
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: the strides above describe `a`, `b` and `c` exactly and the
    // caller guarantees the shapes agree; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let a = Mat::from_fn(5, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let b = Mat::from_fn(3, 4, |i, j| 1.0 + i as f64 * j as f64);
        let ab = naive(&a, &b);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&ab) < 1e-12);
        assert!(a.transpose().t_matmul(&b).unwrap().max_abs_diff(&ab) < 1e-12);
        assert!(a.matmul_t(&b.transpose()).unwrap().max_abs_diff(&ab) < 1e-12);
        assert!(a.matmul(&Mat::zeros(4, 2)).is_err());
    }

    #[test]
    fn hcat_and_select() {
        let a = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Mat::column(&[5.0, 6.0]);
        let c = Mat::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.row(1), &[3.0, 4.0, 6.0]);
        assert_eq!(c.select_rows(&[1, 0]).row(0), &[3.0, 4.0, 6.0]);
        assert_eq!(c.column_sums(), vec![4.0, 6.0, 11.0]);
    }

    #[test]
    fn zero_width() {
        let z = Mat::zeros(3, 0);
        assert_eq!(z.iter_rows().count(), 3);
        assert_eq!(z.matvec(&[]).unwrap(), vec![0.0; 3]);
        let a = Mat::zeros(3, 2);
        assert_eq!(z.t_matmul(&a).unwrap().shape(), (0, 2));
        assert_eq!(a.t_matmul(&z).unwrap().shape(), (2, 0));
    }
}
