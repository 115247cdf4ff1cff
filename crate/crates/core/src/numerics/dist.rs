use super::RngStream;
use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::distr::Distribution;
use rand_distr::{Gamma, Poisson, StandardNormal};

/// One draw from `N(mean, variance)`.
pub fn sample_gaussian(rng: &mut RngStream, mean: f64, variance: f64) -> Result<f64> {
    if !(variance >= 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gaussian needs finite mean and variance >= 0, got N({mean}, {variance})"
        )));
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + libm::sqrt(variance) * z)
}

pub fn sample_bernoulli(rng: &mut RngStream, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "bernoulli probability must lie in [0, 1], got {p}"
        )));
    }
    // p = 0 never fires, p = 1 always does
    Ok(rng.uniform() < p)
}

pub fn sample_poisson(rng: &mut RngStream, lambda: f64) -> Result<u64> {
    if lambda == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(lambda)
        .map_err(|e| Error::InvalidParameter(format!("poisson rate {lambda}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Draw from `Dirichlet(alpha)` by normalizing independent gamma variates.
pub fn sample_dirichlet(rng: &mut RngStream, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidParameter(
            "dirichlet concentrations must be positive and finite".into(),
        ));
    }
    let gammas = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0))
        .collect::<core::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidParameter(format!("gamma shape: {e}")))?;
    // Tiny concentrations can underflow every gamma draw to zero; redraw then.
    for _ in 0..64 {
        let mut x: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let s: f64 = x.iter().sum();
        if s > 0.0 && s.is_finite() {
            x.iter_mut().for_each(|v| *v /= s);
            return Ok(x);
        }
    }
    Err(Error::DegenerateInput(
        "dirichlet draw underflowed repeatedly".into(),
    ))
}

/// Counts of `n` independent categorical draws with weights `p`
/// (nonnegative, normalized internally).
pub fn sample_multinomial(rng: &mut RngStream, n: u64, p: &[f64]) -> Result<Vec<u64>> {
    if p.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "multinomial weights must be nonnegative and finite".into(),
        ));
    }
    let mut counts = vec![0u64; p.len()];
    if n == 0 {
        return Ok(counts);
    }
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &w in p {
        acc += w;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidParameter(
            "multinomial weights sum to zero".into(),
        ));
    }
    for _ in 0..n {
        let u = rng.uniform() * acc;
        // first index with cdf > u; zero-weight categories are never chosen
        let k = cdf.partition_point(|&c| c <= u).min(p.len() - 1);
        counts[k] += 1;
    }
    Ok(counts)
}

/// Fisher–Yates shuffle driven by `rng`.
pub fn shuffle<T>(rng: &mut RngStream, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        let j = rng.below(i + 1);
        xs.swap(i, j);
    }
}
