//! Counterfactual learners (T-learner over three base-learner families) and
//! the raw-proxy baselines.

mod gbdt;
mod linear;
mod mlp;
mod tsls;

pub use gbdt::{BoostModel, BoostParams, Tree};
pub use linear::LinearModel;
pub use mlp::{MlpModel, MlpParams};
pub use tsls::{fit_naive_ols, fit_tsls, TslsFit};

use crate::error::{dims, Error, Result};
use crate::numerics::{Mat, RngStream};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLearnerSpec {
    LinearRidge { ridge: f64 },
    GradBoost(BoostParams),
    Mlp(MlpParams),
}

impl BaseLearnerSpec {
    pub fn linear() -> Self {
        Self::LinearRidge { ridge: DEFAULT_RIDGE }
    }

    pub fn boost() -> Self {
        Self::GradBoost(BoostParams::default())
    }

    pub fn mlp() -> Self {
        Self::Mlp(MlpParams::default())
    }

    /// Short tag: `lr`, `gb` or `mlp`.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::LinearRidge { .. } => "lr",
            Self::GradBoost(_) => "gb",
            Self::Mlp(_) => "mlp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::LinearRidge { ridge } if !(*ridge >= 0.0) => {
                Err(Error::InvalidParameter("ridge must be >= 0".into()))
            }
            Self::LinearRidge { .. } => Ok(()),
            Self::GradBoost(p) => p.validate(),
            Self::Mlp(p) => p.validate(),
        }
    }

    pub fn fit(&self, x: &Mat, y: &[f64], rng: &RngStream) -> Result<FittedLearner> {
        self.validate()?;
        Ok(match self {
            Self::LinearRidge { ridge } => FittedLearner::Linear(LinearModel::fit(x, y, *ridge)?),
            Self::GradBoost(p) => FittedLearner::Boost(BoostModel::fit(x, y, *p)?),
            Self::Mlp(p) => FittedLearner::Mlp(MlpModel::fit(x, y, p, rng)?),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FittedLearner {
    Linear(LinearModel),
    Boost(BoostModel),
    Mlp(MlpModel),
}

impl FittedLearner {
    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        match self {
            Self::Linear(m) => m.predict(x),
            Self::Boost(m) => m.predict(x),
            Self::Mlp(m) => m.predict(x),
        }
    }
}

/// Separate outcome models for the treated (`mu_t`) and control (`mu_c`) arms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TLearnerModel {
    pub mu_t: FittedLearner,
    pub mu_c: FittedLearner,
    pub feature_dim: usize,
}

impl TLearnerModel {
    /// The same model with the arms exchanged.
    pub fn swapped(self) -> Self {
        Self {
            mu_t: self.mu_c,
            mu_c: self.mu_t,
            feature_dim: self.feature_dim,
        }
    }
}

/// Fits `mu_t` on the treated rows and `mu_c` on the control rows.
pub fn fit_tlearner(
    x: &Mat,
    treat: &[u8],
    y_fact: &[f64],
    spec: &BaseLearnerSpec,
    rng: &RngStream,
) -> Result<TLearnerModel> {
    dims("fit_tlearner treat", x.rows(), treat.len())?;
    dims("fit_tlearner outcomes", x.rows(), y_fact.len())?;
    if treat.iter().any(|&t| t > 1) {
        return Err(Error::InvalidParameter("treatment must be 0 or 1".into()));
    }
    let arm = |v: u8| -> Vec<usize> { (0..treat.len()).filter(|&i| treat[i] == v).collect() };
    let (treated, control) = (arm(1), arm(0));
    if treated.is_empty() {
        return Err(Error::EmptyArm("treated"));
    }
    if control.is_empty() {
        return Err(Error::EmptyArm("control"));
    }
    let fit_arm = |idx: &[usize], stream: u64| {
        let y: Vec<f64> = idx.iter().map(|&i| y_fact[i]).collect();
        spec.fit(&x.select_rows(idx), &y, &rng.derive(stream))
    };
    Ok(TLearnerModel {
        mu_t: fit_arm(&treated, 1)?,
        mu_c: fit_arm(&control, 0)?,
        feature_dim: x.cols(),
    })
}

/// `mu_t(x_i) − mu_c(x_i)` per row.
pub fn predict_ite(model: &TLearnerModel, x: &Mat) -> Result<Vec<f64>> {
    dims("predict_ite width", model.feature_dim, x.cols())?;
    let t = model.mu_t.predict(x)?;
    let c = model.mu_c.predict(x)?;
    Ok(t.iter().zip(&c).map(|(a, b)| a - b).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub ace_hat: f64,
    #[serde(skip)]
    pub ite: Vec<f64>,
    pub seed: u64,
    pub n: usize,
    /// Width of the features the method saw: embedding dimension or vocabulary size.
    #[serde(rename = "d_or_V")]
    pub d_or_v: usize,
    pub base_learner: Option<String>,
    pub config_digest: String,
}

impl EstimateReport {
    /// Report for a single scalar estimate (no per-node effects).
    pub fn scalar(method: &str, ace_hat: f64, n: usize, d_or_v: usize) -> Self {
        Self {
            method: method.into(),
            ace_hat,
            ite: Vec::new(),
            seed: 0,
            n,
            d_or_v,
            base_learner: None,
            config_digest: String::new(),
        }
    }
}

/// `ace_hat = mean(ITE)` over the rows of `x`.
pub fn estimate_ace(model: &TLearnerModel, x: &Mat) -> Result<EstimateReport> {
    if x.rows() == 0 {
        return Err(Error::InvalidParameter("no rows to estimate on".into()));
    }
    let ite = predict_ite(model, x)?;
    let ace_hat = ite.iter().sum::<f64>() / ite.len() as f64;
    let base = match model.mu_t {
        FittedLearner::Linear(_) => "lr",
        FittedLearner::Boost(_) => "gb",
        FittedLearner::Mlp(_) => "mlp",
    };
    Ok(EstimateReport {
        method: alloc::format!("t-{base}"),
        ace_hat,
        n: ite.len(),
        ite,
        seed: 0,
        d_or_v: x.cols(),
        base_learner: Some(base.into()),
        config_digest: String::new(),
    })
}

/// T-learner on column-standardized raw proxies `[Z | Zngb]`.
pub fn fit_naive_tlearner(
    ztilde: &Mat,
    treat: &[u8],
    y_fact: &[f64],
    spec: &BaseLearnerSpec,
    rng: &RngStream,
) -> Result<EstimateReport> {
    let x = standardize_columns(ztilde);
    let model = fit_tlearner(&x, treat, y_fact, spec, rng)?;
    estimate_ace(&model, &x)
}

/// Zero-mean, unit-variance columns; constant columns become zero.
pub fn standardize_columns(x: &Mat) -> Mat {
    let n = x.rows().max(1) as f64;
    let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = alloc::vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = libm::sqrt(s / n);
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) * s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(n: usize, tau: f64) -> (Mat, Vec<u8>, Vec<f64>) {
        let mut r = RngStream::new(3, 0);
        let x = Mat::from_fn(n, 3, |_, _| r.uniform());
        let treat: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let y = x
            .iter_rows()
            .zip(&treat)
            .map(|(row, &t)| 1.0 + row[0] - 2.0 * row[1] + 0.5 * row[2] + tau * t as f64)
            .collect();
        (x, treat, y)
    }

    #[test]
    fn linear_tlearner_recovers_constant_effect() {
        let (x, treat, y) = panel(60, 1.25);
        let m = fit_tlearner(&x, &treat, &y, &BaseLearnerSpec::LinearRidge { ridge: 0.0 }, &RngStream::new(0, 0)).unwrap();
        for v in predict_ite(&m, &x).unwrap() {
            assert!((v - 1.25).abs() < 1e-8);
        }
        let rep = estimate_ace(&m, &x).unwrap();
        assert!((rep.ace_hat - 1.25).abs() < 1e-8);
    }

    #[test]
    fn swapping_arms_negates_ite() {
        let (x, treat, y) = panel(40, 0.7);
        let m = fit_tlearner(&x, &treat, &y, &BaseLearnerSpec::boost(), &RngStream::new(0, 0)).unwrap();
        let a = predict_ite(&m, &x).unwrap();
        let b = predict_ite(&m.swapped(), &x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(*u, -*v);
        }
    }

    #[test]
    fn empty_arm_is_an_error() {
        let (x, _, y) = panel(10, 1.0);
        let err = fit_tlearner(&x, &[1; 10], &y, &BaseLearnerSpec::linear(), &RngStream::new(0, 0));
        assert_eq!(err.unwrap_err(), Error::EmptyArm("control"));
    }

    #[test]
    fn feature_width_is_checked() {
        let (x, treat, y) = panel(12, 1.0);
        let m = fit_tlearner(&x, &treat, &y, &BaseLearnerSpec::linear(), &RngStream::new(0, 0)).unwrap();
        assert!(predict_ite(&m, &Mat::zeros(2, 4)).is_err());
    }
}
