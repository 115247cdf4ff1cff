//! Numerical building blocks shared by every other module.

mod dist;
mod linalg;
mod mat;
mod rng;
mod sparse;

pub use dist::{
    sample_bernoulli, sample_dirichlet, sample_gaussian, sample_multinomial, sample_poisson,
    shuffle,
};
pub use linalg::{solve_least_squares, LeastSquares};
pub use mat::Mat;
pub use rng::RngStream;
pub use sparse::SparseRows;

use crate::error::{dims, Error, Result};
use alloc::format;

/// Tolerances used across the crate.
pub mod tol {
    /// Relative threshold for declaring a pivot of a QR factorization zero,
    /// scaled by `max(n, p)` and the largest pivot.
    pub const RANK_RTOL: f64 = f64::EPSILON;
    /// Simplex rows (topic proportions) must sum to one within this.
    pub const SIMPLEX: f64 = 1e-9;
    /// Attachment probabilities must sum to one within this.
    pub const PROBABILITY_SUM: f64 = 1e-9;
    /// Bound on `|logit|` in binary cross-entropy.
    pub const BCE_CLAMP: f64 = 1e-7;
    /// Clamp range for the encoder log-variance.
    pub const LOGVAR_MIN: f64 = -10.0;
    pub const LOGVAR_MAX: f64 = 10.0;
}

/// Logistic function, stable for arbitrarily large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine of the angle between two vectors.
///
/// Fails on a length mismatch, an empty input or a zero vector.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    dims("cosine_similarity", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::DegenerateInput("cosine of empty vectors".into()));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "cosine with zero-norm vector (|a| = {na}, |b| = {nb})"
        )));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (divides by `len`).
pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (divides by `len - 1`); zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (v.len() - 1) as f64)
}
