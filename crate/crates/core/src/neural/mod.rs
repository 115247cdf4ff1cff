//! Dense feed-forward networks with hand-written backpropagation and Adam.

mod adam;
mod loss;
mod net;

pub use adam::{AdamConfig, AdamState};
pub use loss::{bce, bce_grad, mse, mse_grad};
pub use net::{Activation, DenseNet, ForwardCache, Gradients, Input, Layer, LayerGrad};

use crate::numerics::{shuffle, RngStream};
use alloc::vec::Vec;

/// Shuffled index batches covering `0..n` (the last one may be short).
pub fn minibatches(indices: &[usize], batch: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    shuffle(rng, &mut order);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
