use crate::error::{dims, Error, Result};
use crate::neural::{minibatches, mse_grad, Activation, AdamConfig, AdamState, DenseNet};
use crate::numerics::{Mat, RngStream};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: [usize; 2],
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: [125, 125],
            lr: 1e-3,
            epochs: 50,
            batch: 128,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 || self.batch == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidParameter(
                "MLP widths, epochs and batch must be >= 1 and lr > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Two-hidden-layer ReLU regressor on standardized features and targets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpModel {
    pub net: DenseNet,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl MlpModel {
    /// The untrained network used by [`MlpModel::fit`].
    pub fn init_net(inputs: usize, params: &MlpParams, rng: &mut RngStream) -> Result<DenseNet> {
        let [h1, h2] = params.hidden;
        DenseNet::init(&[inputs, h1, h2, 1], Activation::Relu, Activation::Linear, rng)
    }

    pub fn fit(x: &Mat, y: &[f64], params: &MlpParams, rng: &RngStream) -> Result<Self> {
        params.validate()?;
        dims("MlpModel::fit targets", x.rows(), y.len())?;
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter("MLP needs rows and features".into()));
        }
        let x_mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n as f64).collect();
        let mut x_scale = alloc::vec![0.0; p];
        for r in x.iter_rows() {
            for ((s, v), m) in x_scale.iter_mut().zip(r).zip(&x_mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut x_scale {
            let sd = libm::sqrt(*s / n as f64);
            *s = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_sd = libm::sqrt(y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64);
        // a constant target predicts its mean exactly
        let y_scale = if y_sd > 1e-12 { y_sd } else { 0.0 };

        let mut model = Self {
            net: Self::init_net(p, params, &mut rng.derive(1))?,
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        };
        let xs = model.standardize(x);
        let ys = Mat::column(
            &y.iter()
                .map(|v| if y_scale > 0.0 { (v - y_mean) / y_scale } else { 0.0 })
                .collect::<Vec<_>>(),
        );
        let mut adam = AdamState::new(&model.net, AdamConfig::with_lr(params.lr));
        let mut shuffle_rng = rng.derive(2);
        let all: Vec<usize> = (0..n).collect();
        for _ in 0..params.epochs {
            for batch in minibatches(&all, params.batch, &mut shuffle_rng) {
                let xb = xs.select_rows(&batch);
                let yb = ys.select_rows(&batch);
                let (out, cache) = model.net.forward(&xb)?;
                let g = model.net.backward(&cache, &mse_grad(&out, &yb))?;
                adam.step(&mut model.net, &g)?;
            }
        }
        if !model.net.is_finite() {
            return Err(Error::DegenerateInput("MLP training diverged".into()));
        }
        Ok(model)
    }

    fn standardize(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.x_mean).zip(&self.x_scale) {
                *v = (*v - m) * s;
            }
        }
        out
    }

    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        dims("MlpModel::predict width", self.x_mean.len(), x.cols())?;
        let out = self.net.predict(&self.standardize(x))?;
        Ok(out.data().iter().map(|v| v * self.y_scale + self.y_mean).collect())
    }
}
