//! Noisy CSI feedback laboratory.
//!
//! Synthetic sparse massive-MIMO channels are compressed by an autoencoder
//! into a unit-norm codeword, corrupted by additive feedback noise, cleaned by
//! a skip-connection denoise network and reconstructed at the base station.
//! The crate provides the networks, the two-stage training procedure and the
//! NMSE / cosine-correlation evaluation sweeps.

pub mod channel;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
