//! Hybrid spectral graph pre-training and prompt tuning.
//!
//! The crate bundles a Beta-wavelet filter bank, local-global contrastive
//! pre-training over that bank, prompt-graph tuning against a frozen
//! backbone, a contextual stochastic block model generator and a set of
//! spectral diagnostics.

pub mod csbm;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod nn;
pub mod pretrain;
pub mod prompt;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
