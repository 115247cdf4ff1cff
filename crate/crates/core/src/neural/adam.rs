use super::{DenseNet, Gradients};
use crate::error::{dims, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        dims("AdamState::step layers", self.m.layers.len(), grads.layers.len())?;
        for (m, g) in self.m.layers.iter().zip(&grads.layers) {
            g.w.check_shape("AdamState::step weights", m.w.rows(), m.w.cols())?;
            dims("AdamState::step bias", m.b.len(), g.b.len())?;
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        // lr·m̂/(√v̂ + eps) with the bias corrections folded into constants
        let step = lr / c1;
        let inv_sqrt_c2 = 1.0 / libm::sqrt(c2);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= step * *m / (libm::sqrt(*v) * inv_sqrt_c2 + eps);
        };
        let layers = net.layers_mut();
        for (((layer, g), m), v) in layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            for (((p, &gg), mm), vv) in layer
                .w
                .data_mut()
                .iter_mut()
                .zip(g.w.data())
                .zip(m.w.data_mut())
                .zip(v.w.data_mut())
            {
                update(p, mm, vv, gg);
            }
            for (((p, &gg), mm), vv) in layer.b.iter_mut().zip(&g.b).zip(&mut m.b).zip(&mut v.b) {
                update(p, mm, vv, gg);
            }
        }
        Ok(())
    }
}
