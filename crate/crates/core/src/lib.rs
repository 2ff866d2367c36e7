//! Ensembles of neural-network forecasters trained with different
//! algorithms, combined with error-based weights.

pub mod baselines;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod mlp;
pub mod seeds;
pub mod series;
pub mod trainers;

pub use error::{Error, Result};
