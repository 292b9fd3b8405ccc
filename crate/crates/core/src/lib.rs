//! Weak co-channel interferer detection for OFDM traffic.
//!
//! The crate is organised as a pipeline:
//!
//! * [`signal`] synthesizes 802.11-style OFDM victim packets, DSSS / OFDM /
//!   multi-tone interferers, a tapped-delay-line channel and the SIR/SNR mixer.
//! * [`dataset`] materializes the in-distribution, outlier-exposure and test
//!   datasets with a fixed `[n_mod, n_sir_bins, n_batches, batch_size]` geometry,
//!   the spectral preprocessing, and a binary file format.
//! * [`nn`] is a small reverse-mode differentiation and layer library.
//! * [`detectors`] holds the four out-of-distribution scorers (maximum softmax
//!   probability, proxy-anchor metric learning, VAE reconstruction, and
//!   autoregressive likelihood ratio), each trainable with outlier exposure.
//! * [`eval`] turns score tables into ROC curves and AUROC grids.
//! * [`cli`] wires the pieces into the `oodbench` command.

mod binio;
pub mod cli;
pub mod dataset;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod nn;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
