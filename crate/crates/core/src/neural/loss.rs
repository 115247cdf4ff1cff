use crate::numerics::{tol, Mat};

/// Mean over rows of the summed squared error.
pub fn mse(pred: &Mat, target: &Mat) -> f64 {
    let rows = pred.rows().max(1) as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / rows
}

pub fn mse_grad(pred: &Mat, target: &Mat) -> Mat {
    let rows = pred.rows().max(1) as f64;
    let mut g = pred.clone();
    for (a, t) in g.data_mut().iter_mut().zip(target.data()) {
        *a = 2.0 * (*a - t) / rows;
    }
    g
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(tol::BCE_CLAMP, 1.0 - tol::BCE_CLAMP)
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
pub fn bce(prob: &[f64], labels: &[f64]) -> f64 {
    let n = prob.len().max(1) as f64;
    prob.iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
        })
        .sum::<f64>()
        / n
}

/// `∂ bce / ∂ prob` (with the same clamping as [`bce`]).
pub fn bce_grad(prob: &[f64], labels: &[f64]) -> alloc::vec::Vec<f64> {
    let n = prob.len().max(1) as f64;
    prob.iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            (-y / p + (1.0 - y) / (1.0 - p)) / n
        })
        .collect()
}
