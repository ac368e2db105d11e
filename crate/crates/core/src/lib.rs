//! Perceptually weighted graph-transform image codec.
//!
//! The crate learns per-class graph Laplacians from training images,
//! builds irregularity-aware graph Fourier transforms (IAGFTs) from them,
//! and plugs those transforms into a JPEG-style grayscale block codec.
//! An evaluation harness computes SSIM / MS-SSIM rate-distortion curves
//! and Bjontegaard rate deltas against the DCT baseline.

pub mod codec;
pub mod error;
pub mod eval;
pub mod graphlearn;
pub mod graphs;
pub mod imageio;
pub mod metrics;
pub mod model;
pub mod perceptual;
pub mod spectral;
pub mod synth;
pub mod transforms;
pub mod weightvq;

pub use error::{Error, Result};
