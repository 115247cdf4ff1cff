//! Least squares by Householder QR with column pivoting.
//!
//! Full-rank problems are solved by back substitution on `R`. Rank-deficient
//! ones go through a complete orthogonal decomposition so the returned
//! coefficients are the minimum-norm minimizer. A positive ridge is folded in
//! by augmenting the design with `sqrt(ridge) * I`, which always has full rank.

use super::{mat::gemm, tol, Mat};
use crate::error::{dims, Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// A factored least-squares problem `min ‖X β − y‖² + ridge ‖β‖²`.
///
/// Factor once, then solve for any number of right-hand sides.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    n: usize,
    p: usize,
    ridge: f64,
    /// Rows of the factored matrix (`n`, or `n + p` with ridge augmentation).
    m: usize,
    /// Original column index of each factored column.
    cols: Vec<usize>,
    /// Column-major `m × k` Householder vectors below the diagonal and `R` on and above it.
    qr: Vec<f64>,
    tau: Vec<f64>,
    rank: usize,
    /// Householder factorization of `[R11 R12]ᵀ` when `rank < k`.
    cod: Option<Cod>,
}

#[derive(Clone, Debug)]
struct Cod {
    // column-major k × rank
    qr: Vec<f64>,
    tau: Vec<f64>,
}

impl LeastSquares {
    pub fn new(x: &Mat, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "ridge must be finite and >= 0, got {ridge}"
            )));
        }
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "least squares needs n >= 1 and p >= 1, got {n} x {p}"
            )));
        }
        // All-zero columns carry a zero coefficient in the minimum-norm
        // solution, so they never enter the factorization.
        let cols: Vec<usize> = if ridge > 0.0 {
            (0..p).collect()
        } else {
            (0..p)
                .filter(|&j| (0..n).any(|i| x.get(i, j) != 0.0))
                .collect()
        };
        let k = cols.len();
        let m = if ridge > 0.0 { n + p } else { n };
        let mut qr = vec![0.0; m * k];
        for (c, &j) in cols.iter().enumerate() {
            let col = &mut qr[c * m..(c + 1) * m];
            for i in 0..n {
                col[i] = x.get(i, j);
            }
            if ridge > 0.0 {
                col[n + j] = libm::sqrt(ridge);
            }
        }
        let mut ls = Self {
            n,
            p,
            ridge,
            m,
            cols,
            qr,
            tau: Vec::new(),
            rank: 0,
            cod: None,
        };
        ls.factor();
        Ok(ls)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Minimizer for one right-hand side (length `n`). Returns `p` coefficients.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        dims("LeastSquares::solve", self.n, y.len())?;
        let mut work = vec![0.0; self.m];
        work[..self.n].copy_from_slice(y);
        self.apply_qt(&mut work);
        let r = self.rank;
        let k = self.cols.len();
        let mut z = vec![0.0; k];
        match &self.cod {
            None => {
                // R z = (Qᵀy)[..k]
                for i in (0..r).rev() {
                    let mut s = work[i];
                    for j in i + 1..r {
                        s -= self.r(i, j) * z[j];
                    }
                    z[i] = s / self.r(i, i);
                }
            }
            Some(cod) => {
                // [R11 R12] = Tᵀ Wᵀ with W orthogonal (k × k), T upper triangular (r × r).
                // Solve Tᵀ w = c, then z = W [w; 0].
                let mut w = vec![0.0; k];
                for i in 0..r {
                    let mut s = work[i];
                    for j in 0..i {
                        s -= cod.qr[i * k + j] * w[j];
                    }
                    w[i] = s / cod.qr[i * k + i];
                }
                for j in (0..r).rev() {
                    apply_reflector(&cod.qr[j * k..(j + 1) * k], cod.tau[j], j, &mut w);
                }
                z = w;
            }
        }
        let mut beta = vec![0.0; self.p];
        for (c, &j) in self.cols.iter().enumerate() {
            beta[j] = z[c];
        }
        Ok(beta)
    }

    /// Coefficients for every column of `ys` (`n × q`); returns `p × q`.
    pub fn solve_many(&self, ys: &Mat) -> Result<Mat> {
        dims("LeastSquares::solve_many", self.n, ys.rows())?;
        let mut out = Mat::zeros(self.p, ys.cols());
        for c in 0..ys.cols() {
            let beta = self.solve(&ys.col(c))?;
            for (j, b) in beta.into_iter().enumerate() {
                out.set(j, c, b);
            }
        }
        Ok(out)
    }

    /// Fitted values `X β̂` for every column of `ys`.
    ///
    /// Without ridge this is the orthogonal projection onto the column space
    /// of `X`, computed through an explicit orthonormal basis.
    pub fn fitted_many(&self, x: &Mat, ys: &Mat) -> Result<Mat> {
        dims("LeastSquares::fitted_many", self.n, ys.rows())?;
        x.check_shape("LeastSquares::fitted_many design", self.n, self.p)?;
        if self.ridge > 0.0 {
            return x.matmul(&self.solve_many(ys)?);
        }
        let basis = self.orthonormal_basis();
        let mut coef = Mat::zeros(basis.cols(), ys.cols());
        gemm(&basis, true, ys, false, 1.0, 0.0, &mut coef);
        basis.matmul(&coef)
    }

    /// `n × rank` orthonormal basis of the column space (no-ridge factorizations).
    pub fn orthonormal_basis(&self) -> Mat {
        let (m, r) = (self.m, self.rank);
        // column-major m × r, starts as the leading columns of I
        let mut q = vec![0.0; m * r];
        for j in 0..r {
            q[j * m + j] = 1.0;
        }
        for j in (0..r).rev() {
            let v = &self.qr[j * m..(j + 1) * m];
            for c in j..r {
                apply_reflector(v, self.tau[j], j, &mut q[c * m..(c + 1) * m]);
            }
        }
        Mat::from_fn(self.n, r, |i, j| q[j * m + i])
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[j * self.m + i]
    }

    fn apply_qt(&self, y: &mut [f64]) {
        for j in 0..self.rank {
            apply_reflector(&self.qr[j * self.m..(j + 1) * self.m], self.tau[j], j, y);
        }
    }

    fn factor(&mut self) {
        let m = self.m;
        let k = self.cols.len();
        let steps = m.min(k);
        let mut norms: Vec<f64> = (0..k)
            .map(|c| super::norm(&self.qr[c * m..(c + 1) * m]))
            .collect();
        let mut ref_norms = norms.clone();
        let mut top = 0.0f64;
        let mut rank = 0;
        for j in 0..steps {
            let (piv, &pn) = norms[j..]
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i + j, v))
                .unwrap();
            if j == 0 {
                top = pn;
            }
            if pn <= tol::RANK_RTOL * (m.max(k) as f64) * top || pn == 0.0 {
                break;
            }
            if piv != j {
                for i in 0..m {
                    self.qr.swap(j * m + i, piv * m + i);
                }
                self.cols.swap(j, piv);
                norms.swap(j, piv);
                ref_norms.swap(j, piv);
            }
            let (head, tail) = self.qr.split_at_mut((j + 1) * m);
            let v = &mut head[j * m..];
            let tau = make_reflector(v, j);
            for c in 0..k - j - 1 {
                let col = &mut tail[c * m..(c + 1) * m];
                apply_reflector(v, tau, j, col);
            }
            self.tau.push(tau);
            rank += 1;
            // Downdate the trailing column norms, recomputing on cancellation.
            for c in j + 1..k {
                if norms[c] == 0.0 {
                    continue;
                }
                let rjc = self.qr[c * m + j];
                let t = 1.0 - (rjc / norms[c]) * (rjc / norms[c]);
                let t = t.max(0.0);
                let ratio = norms[c] / ref_norms[c];
                if t * ratio * ratio <= 1e-8 {
                    let col = &self.qr[c * m + j + 1..(c + 1) * m];
                    norms[c] = super::norm(col);
                    ref_norms[c] = norms[c];
                } else {
                    norms[c] *= libm::sqrt(t);
                }
            }
        }
        self.rank = rank;
        if rank < k {
            self.cod = Some(self.trailing_cod());
        }
    }

    fn trailing_cod(&self) -> Cod {
        let r = self.rank;
        let k = self.cols.len();
        // [R11 R12]ᵀ as column-major k × r: column i is row i of R.
        let mut qr = vec![0.0; k * r];
        for i in 0..r {
            for j in i..k {
                qr[i * k + j] = self.r(i, j);
            }
        }
        let mut tau = Vec::with_capacity(r);
        for j in 0..r {
            let (head, tail) = qr.split_at_mut((j + 1) * k);
            let v = &mut head[j * k..];
            let t = make_reflector(v, j);
            for c in 0..r - j - 1 {
                apply_reflector(v, t, j, &mut tail[c * k..(c + 1) * k]);
            }
            tau.push(t);
        }
        // Upper triangle holds T, reflectors sit below the diagonal.
        Cod { qr, tau }
    }
}

/// Turns `v[start..]` into a Householder vector with implicit unit head.
/// On return `v[start]` holds the resulting diagonal entry `β`.
fn make_reflector(v: &mut [f64], start: usize) -> f64 {
    let x = &mut v[start..];
    let alpha = x[0];
    let sigma: f64 = x[1..].iter().map(|a| a * a).sum();
    if sigma == 0.0 {
        // already upper triangular in this column; H = I
        return 0.0;
    }
    let nrm = libm::sqrt(alpha * alpha + sigma);
    let beta = if alpha <= 0.0 { nrm } else { -nrm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for a in x[1..].iter_mut() {
        *a *= scale;
    }
    x[0] = beta;
    tau
}

/// `y ← (I − τ v vᵀ) y` with `v = [1, v[start+1..]]` acting on `y[start..]`.
#[inline]
fn apply_reflector(v: &[f64], tau: f64, start: usize, y: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let vs = &v[start + 1..];
    let ys = &mut y[start..];
    let (y0, yt) = ys.split_first_mut().unwrap();
    let s = *y0 + super::dot(vs, yt);
    let s = s * tau;
    *y0 -= s;
    for (a, b) in yt.iter_mut().zip(vs) {
        *a -= s * b;
    }
}

/// Minimizer of `‖X β − y‖² + ridge ‖β‖²`; minimum-norm when `ridge = 0` and
/// `X` is rank deficient.
pub fn solve_least_squares(x: &Mat, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    dims("solve_least_squares", x.rows(), y.len())?;
    LeastSquares::new(x, ridge)?.solve(y)
}
