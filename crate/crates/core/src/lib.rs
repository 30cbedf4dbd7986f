//! Deblurring from a blurred/noisy image pair.
//!
//! Given a blurred photo and a sharper but noisy photo of the same scene
//! (possibly from a slightly different view), the blurred image is sliced
//! into overlapping patches, each patch's latent intensities are modeled by
//! a Gaussian mixture fit to flow-corresponded noisy observations, and the
//! updated patches are averaged back into an image. Dense-flow estimation
//! and the per-patch EM alternate for several rounds, optionally followed
//! by a bilateral-filtered detail layer pulled from the noisy image.

pub mod config;
pub mod detail;
pub mod error;
pub mod flow;
pub mod gmm;
pub mod image;
pub mod metrics;
pub mod patch;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
