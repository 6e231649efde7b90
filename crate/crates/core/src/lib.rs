//! Multimodal classification when the second modality is missing for most
//! training samples.
//!
//! The pieces, bottom-up:
//! - [`autodiff`]: reverse-mode differentiation over dense `f64` arrays.
//! - [`signal`]: WAV decoding and MFCC feature maps.
//! - [`dataset`]: IDX loading, bimodal pairing, modality masking and
//!   synthetic task generators.
//! - [`priors`]: K-means / PCA modality priors.
//! - [`nn`]: encoders, fusion head, reconstruction and regularization
//!   networks, checkpoints.
//! - [`variational`]: reparameterized sampling, Gaussian KL and the
//!   Monte-Carlo training objective.
//! - [`train`]: the bilevel meta-learning trainer and the baselines.
//! - [`eval`]: metrics, missing-pattern evaluation, ablations, reports and
//!   configuration files.

pub mod autodiff;
pub mod error;
pub mod par;
pub mod signal;

pub use error::{Error, Result};
pub mod dataset;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod priors;
pub mod random;
pub mod train;
pub mod variational;
