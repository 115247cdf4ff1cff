//! Contagion-effect estimation under latent homophily.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic piece
//! of the pipeline:
//!
//! - [`numerics`]: seeded random streams, dense matrices, least squares, samplers.
//! - [`graphgen`]: homophilic dyads and homophily-weighted preferential attachment.
//! - [`simdata`]: latent topics, bag-of-words proxies, activations, potential outcomes.
//! - [`neural`]: dense feed-forward nets with hand-written backprop and Adam.
//! - [`proemb`]: variational proxy embeddings balanced by an adversarial discriminator.
//! - [`estimators`]: T-learners (ridge, boosted trees, MLP), TSLS and OLS baselines.
//! - [`experiment`]: seeded multi-run experiments aggregated into RMSE tables.
//!
//! IO, file formats and the command line live in the `proemb` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod graphgen;
pub mod neural;
pub mod numerics;
pub mod proemb;
pub mod simdata;

pub use error::{Error, Result};
