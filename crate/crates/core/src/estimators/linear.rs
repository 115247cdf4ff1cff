use crate::error::{dims, Error, Result};
use crate::numerics::{LeastSquares, Mat};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Ridge regression with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    /// Fits on centered data; with `ridge = 0` rank-deficient designs get the
    /// minimum-norm slope.
    pub fn fit(x: &Mat, y: &[f64], ridge: f64) -> Result<Self> {
        dims("LinearModel::fit targets", x.rows(), y.len())?;
        let n = x.rows();
        if n == 0 {
            return Err(Error::InvalidParameter("no rows to fit".into()));
        }
        let p = x.cols();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        if p == 0 || n == 1 {
            return Ok(Self {
                intercept: y_mean,
                coef: alloc::vec![0.0; p],
            });
        }
        let x_mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n as f64).collect();
        let mut xc = x.clone();
        let neg: Vec<f64> = x_mean.iter().map(|m| -m).collect();
        xc.add_row_vector(&neg)?;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let coef = if xc.data().iter().all(|&v| v == 0.0) {
            alloc::vec![0.0; p]
        } else {
            LeastSquares::new(&xc, ridge)?.solve(&yc)?
        };
        let intercept = y_mean - crate::numerics::dot(&x_mean, &coef);
        Ok(Self { intercept, coef })
    }

    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        dims("LinearModel::predict width", self.coef.len(), x.cols())?;
        Ok(x.iter_rows()
            .map(|r| self.intercept + crate::numerics::dot(r, &self.coef))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_with_intercept() {
        let x = Mat::from_fn(6, 2, |i, j| (i * (j + 1)) as f64 + (j * i * i) as f64);
        let y: Vec<f64> = x.iter_rows().map(|r| 3.0 + 2.0 * r[0] - r[1]).collect();
        let m = LinearModel::fit(&x, &y, 0.0).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-10);
        assert!((m.coef[0] - 2.0).abs() < 1e-10);
        assert!((m.coef[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_target() {
        let x = Mat::from_fn(5, 3, |i, j| ((i + 1) * (j + 2)) as f64);
        let m = LinearModel::fit(&x, &[4.0; 5], 1e-6).unwrap();
        for p in m.predict(&x).unwrap() {
            assert!((p - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_features() {
        let x = Mat::from_fn(4, 2, |_, _| 1.5);
        let m = LinearModel::fit(&x, &[1.0, 2.0, 3.0, 4.0], 0.0).unwrap();
        assert_eq!(m.coef, [0.0, 0.0]);
        assert_eq!(m.intercept, 2.5);
    }
}
