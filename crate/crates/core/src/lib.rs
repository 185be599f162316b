//! Stylized response generation in a shared latent space.
//!
//! A conversation model and a sentence autoencoder share one decoder; fusion
//! and smoothness regularizers align their latent spaces so that sampling
//! around a context's prediction point trades relevance for style.

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod style;
pub mod tensor;
#[cfg(test)]
pub(crate) mod testutil;
pub mod train;

pub use error::{Error, Result};
