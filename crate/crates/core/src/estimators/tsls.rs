//! Two-stage least squares on raw proxies and the naive OLS baseline.

use crate::error::{dims, Error, Result};
use crate::numerics::{LeastSquares, Mat};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TslsFit {
    pub theta: f64,
    /// Second-stage coefficients on `[1 | T̂ | Ẑ]`.
    pub coef: Vec<f64>,
    pub first_stage_rank: usize,
    pub second_stage_rank: usize,
    /// Share of `T`'s variation explained by the instruments.
    pub first_stage_r2_treat: f64,
}

fn check_treat(treat: &[u8]) -> Result<()> {
    if treat.iter().any(|&t| t > 1) {
        return Err(Error::InvalidParameter("treatment must be 0 or 1".into()));
    }
    if treat.iter().all(|&t| t == treat[0]) {
        return Err(Error::NoTreatmentVariation);
    }
    Ok(())
}

fn design(leading: &[&[f64]], block: &Mat) -> Mat {
    let k = leading.len();
    Mat::from_fn(block.rows(), k + block.cols(), |i, j| {
        if j < k {
            leading[j][i]
        } else {
            block.get(i, j - k)
        }
    })
}

/// Regresses `[T | Z]` on `[1 | T | Zngb]`, then `y` on `[1 | T̂ | Ẑ]`;
/// `theta` is the coefficient of `T̂`.
pub fn fit_tsls(y: &[f64], treat: &[u8], z: &Mat, zngb: &Mat, ridge: f64) -> Result<TslsFit> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidParameter("TSLS needs n >= 2".into()));
    }
    dims("fit_tsls treat", n, treat.len())?;
    dims("fit_tsls Z rows", n, z.rows())?;
    zngb.check_shape("fit_tsls Zngb", n, z.cols())?;
    check_treat(treat)?;
    let ones = alloc::vec![1.0; n];
    let t: Vec<f64> = treat.iter().map(|&v| v as f64).collect();

    let instruments = design(&[&ones, &t], zngb);
    let endogenous = design(&[&t], z);
    let first = LeastSquares::new(&instruments, ridge)?;
    let fitted = first.fitted_many(&instruments, &endogenous)?;
    let t_hat = fitted.col(0);
    let t_mean = t.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = t.iter().map(|v| (v - t_mean) * (v - t_mean)).sum();
    let ss_res: f64 = t.iter().zip(&t_hat).map(|(a, b)| (a - b) * (a - b)).sum();

    let second_design = design(&[&ones], &fitted);
    let second = LeastSquares::new(&second_design, ridge)?;
    let coef = second.solve(y)?;
    Ok(TslsFit {
        theta: coef[1],
        coef,
        first_stage_rank: first.rank(),
        second_stage_rank: second.rank(),
        first_stage_r2_treat: 1.0 - ss_res / ss_tot,
    })
}

/// Coefficient of `T` in the regression of `y` on `[1 | T | Z]`.
pub fn fit_naive_ols(y: &[f64], treat: &[u8], z: &Mat, ridge: f64) -> Result<f64> {
    let n = y.len();
    dims("fit_naive_ols treat", n, treat.len())?;
    dims("fit_naive_ols Z rows", n, z.rows())?;
    check_treat(treat)?;
    let ones = alloc::vec![1.0; n];
    let t: Vec<f64> = treat.iter().map(|&v| v as f64).collect();
    let coef = LeastSquares::new(&design(&[&ones, &t], z), ridge)?.solve(y)?;
    Ok(coef[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_proxies_collapse_to_difference_in_means() {
        let treat = [0u8, 1, 0, 1, 1, 0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 0.0];
        let empty = Mat::zeros(6, 0);
        let fit = fit_tsls(&y, &treat, &empty, &empty, 0.0).unwrap();
        assert!((fit.theta - 3.0).abs() < 1e-12);
        assert!((fit.first_stage_r2_treat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_treatment_is_rejected() {
        let z = Mat::zeros(3, 1);
        assert_eq!(
            fit_tsls(&[1.0, 2.0, 3.0], &[1, 1, 1], &z, &z, 0.0).unwrap_err(),
            Error::NoTreatmentVariation
        );
        assert!(fit_naive_ols(&[1.0, 2.0, 3.0], &[0, 0, 0], &z, 0.0).is_err());
    }

    #[test]
    fn naive_ols_recovers_exact_effect() {
        let z = Mat::from_fn(8, 1, |i, _| (i * i) as f64);
        let treat = [0u8, 1, 1, 0, 1, 0, 0, 1];
        let y: Vec<f64> = (0..8).map(|i| 2.0 + 1.5 * treat[i] as f64 - 0.3 * z.get(i, 0)).collect();
        assert!((fit_naive_ols(&y, &treat, &z, 0.0).unwrap() - 1.5).abs() < 1e-10);
    }
}
