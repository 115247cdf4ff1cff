use crate::error::{dims, Error, Result};
use crate::numerics::{sigmoid, Mat, RngStream, SparseRows};
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};
use serde::{Deserialize, Serialize};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Affine map `x ↦ act(W x + b)` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    /// He-uniform weights for ReLU, Xavier-uniform otherwise; zero biases.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let limit = match activation {
            Activation::Relu => libm::sqrt(6.0 / input as f64),
            _ => libm::sqrt(6.0 / (input + output) as f64),
        };
        let w = Mat::from_fn(output, input, |_, _| (2.0 * rng.uniform() - 1.0) * limit);
        Self {
            w,
            b: vec![0.0; output],
            activation,
        }
    }
}

/// Batch fed to the first layer.
#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Dense(&'a Mat),
    Sparse(&'a SparseRows),
}

impl Input<'_> {
    pub fn rows(&self) -> usize {
        match self {
            Input::Dense(m) => m.rows(),
            Input::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Input::Dense(m) => m.cols(),
            Input::Sparse(s) => s.cols(),
        }
    }
}

impl<'a> From<&'a Mat> for Input<'a> {
    fn from(m: &'a Mat) -> Self {
        Input::Dense(m)
    }
}

impl<'a> From<&'a SparseRows> for Input<'a> {
    fn from(s: &'a SparseRows) -> Self {
        Input::Sparse(s)
    }
}

#[derive(Clone, Debug)]
enum CachedInput {
    Dense(Mat),
    Sparse(SparseRows),
}

/// Activations recorded by [`DenseNet::forward`], consumed by backward.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    input: CachedInput,
    /// Outputs of every layer but the last.
    hidden: Vec<Mat>,
    /// Output of the last layer, kept only when its activation is nonlinear.
    last: Option<Mat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// Gradients for every parameter of a [`DenseNet`], layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    w: Mat::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            g.w.scale(s);
            g.b.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Flat view in the same order as [`DenseNet::param`].
    pub fn get(&self, mut idx: usize) -> f64 {
        for g in &self.layers {
            let nw = g.w.data().len();
            if idx < nw {
                return g.w.data()[idx];
            }
            idx -= nw;
            if idx < g.b.len() {
                return g.b[idx];
            }
            idx -= g.b.len();
        }
        panic!("gradient index out of range")
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|g| g.w.data().len() + g.b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.w.data().iter().chain(&g.b))
            .fold(0.0, |a, &x| a.max(x.abs()))
    }
}

/// Feed-forward stack of dense layers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawNet")]
pub struct DenseNet {
    layers: Vec<Layer>,
    #[serde(skip, default = "fresh_version")]
    version: u64,
}

#[derive(Deserialize)]
struct RawNet {
    layers: Vec<Layer>,
}

impl TryFrom<RawNet> for DenseNet {
    type Error = Error;

    fn try_from(raw: RawNet) -> Result<Self> {
        Self::from_layers(raw.layers)
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for l in &layers {
            dims("DenseNet bias length", l.out_dim(), l.b.len())?;
        }
        for pair in layers.windows(2) {
            dims("DenseNet layer chaining", pair[0].out_dim(), pair[1].in_dim())?;
        }
        Ok(Self {
            layers,
            version: fresh_version(),
        })
    }

    /// Layers of widths `widths[0] → widths[1] → …`; `hidden` activation on
    /// every layer but the last, which uses `output`.
    pub fn init(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidParameter(
                "network widths need at least two positive entries".into(),
            ));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer::init(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.data().len() + l.b.len()).sum()
    }

    /// Flat parameter view: per layer, `W` row-major then `b`.
    pub fn param(&self, idx: usize) -> f64 {
        let (l, k) = self.locate(idx);
        let layer = &self.layers[l];
        if k < layer.w.data().len() {
            layer.w.data()[k]
        } else {
            layer.b[k - layer.w.data().len()]
        }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        let (l, k) = self.locate(idx);
        self.version = fresh_version();
        let layer = &mut self.layers[l];
        let nw = layer.w.data().len();
        if k < nw {
            layer.w.data_mut()[k] = v;
        } else {
            layer.b[k - nw] = v;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let sz = layer.w.data().len() + layer.b.len();
            if idx < sz {
                return (l, idx);
            }
            idx -= sz;
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|x| x.is_finite()))
    }

    /// Output only, no cache.
    pub fn predict<'a>(&self, input: impl Into<Input<'a>>) -> Result<Mat> {
        let input = input.into();
        dims("DenseNet input width", self.in_dim(), input.cols())?;
        let mut h = self.first_layer(input)?;
        for layer in &self.layers[1..] {
            h = affine(layer, &h)?;
        }
        Ok(h)
    }

    pub fn forward<'a>(&self, input: impl Into<Input<'a>>) -> Result<(Mat, ForwardCache)> {
        let input = input.into();
        dims("DenseNet input width", self.in_dim(), input.cols())?;
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut h = self.first_layer(input)?;
        for layer in &self.layers[1..] {
            let next = affine(layer, &h)?;
            hidden.push(core::mem::replace(&mut h, next));
        }
        let last = (self.layers.last().unwrap().activation != Activation::Linear).then(|| h.clone());
        let cached = match input {
            Input::Dense(m) => CachedInput::Dense(m.clone()),
            Input::Sparse(s) => CachedInput::Sparse(s.clone()),
        };
        Ok((
            h,
            ForwardCache {
                version: self.version,
                batch: input.rows(),
                input: cached,
                hidden,
                last,
            },
        ))
    }

    fn first_layer(&self, input: Input<'_>) -> Result<Mat> {
        let layer = &self.layers[0];
        match input {
            Input::Dense(m) => affine(layer, m),
            Input::Sparse(s) => {
                let mut z = s.matmul_t(&layer.w)?;
                finish_affine(layer, &mut z)?;
                Ok(z)
            }
        }
    }

    /// Parameter gradients for `∂loss/∂output = grad_out`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Mat) -> Result<Gradients> {
        self.backprop(cache, grad_out.clone(), false).map(|(g, _)| g)
    }

    /// Parameter gradients plus `∂loss/∂input` (dense inputs only).
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        grad_out: &Mat,
    ) -> Result<(Gradients, Mat)> {
        self.backward_with_input_owned(cache, grad_out.clone())
    }

    /// [`DenseNet::backward_with_input`] reusing the buffer of `grad_out`.
    pub fn backward_with_input_owned(
        &self,
        cache: &ForwardCache,
        grad_out: Mat,
    ) -> Result<(Gradients, Mat)> {
        let (g, d) = self.backprop(cache, grad_out, true)?;
        Ok((g, d.expect("input gradient requested")))
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        grad_out: Mat,
        want_input: bool,
    ) -> Result<(Gradients, Option<Mat>)> {
        if cache.version != self.version || cache.hidden.len() + 1 != self.layers.len() {
            return Err(Error::StaleCache);
        }
        grad_out.check_shape("DenseNet::backward grad", cache.batch, self.out_dim())?;
        if want_input && matches!(cache.input, CachedInput::Sparse(_)) {
            return Err(Error::InvalidParameter(
                "input gradient is not available for sparse inputs".into(),
            ));
        }
        let top = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation != Activation::Linear {
                let out = if l == top {
                    cache.last.as_ref().expect("nonlinear output is cached")
                } else {
                    &cache.hidden[l]
                };
                for (d, &y) in delta.data_mut().iter_mut().zip(out.data()) {
                    *d *= layer.activation.derivative_from_output(y);
                }
            }
            let b = delta.column_sums();
            let w = if l == 0 {
                match &cache.input {
                    CachedInput::Dense(x) => delta.t_matmul(x)?,
                    CachedInput::Sparse(s) => s.t_left_matmul(&delta)?,
                }
            } else {
                delta.t_matmul(&cache.hidden[l - 1])?
            };
            grads.push(LayerGrad { w, b });
            if l > 0 || want_input {
                delta = delta.matmul(&layer.w)?;
            }
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, want_input.then_some(delta)))
    }
}

fn affine(layer: &Layer, x: &Mat) -> Result<Mat> {
    let mut z = x.matmul_t(&layer.w)?;
    finish_affine(layer, &mut z)?;
    Ok(z)
}

fn finish_affine(layer: &Layer, z: &mut Mat) -> Result<()> {
    z.add_row_vector(&layer.b)?;
    let act = layer.activation;
    if act != Activation::Linear {
        z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
    }
    Ok(())
}
