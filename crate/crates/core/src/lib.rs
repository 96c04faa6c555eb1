//! Vision pipeline, convolutional network engine, training loop and dataset
//! handling for an automatic retail checkout that identifies items from a
//! single overhead camera frame.
//!
//! The crate is organised bottom-up:
//!
//! - [`raster`]: 8-bit image container and geometric primitives.
//! - [`preprocess`]: the six-stage frame-to-network-input pipeline and the
//!   classical vision operations it is built from.
//! - [`nn`]: tensors, layers, the fixed classification network and its
//!   checkpoint format.
//! - [`train`]: AMSGrad, learning-rate schedule, mini-batch assembly,
//!   evaluation and the training loop.
//! - [`dataset`]: item catalog, corpus scanning, stratified splits and
//!   example loading with a preprocessing cache.
//! - [`synth`]: a generated corpus of coloured shapes for desk-scale checks.

pub mod dataset;
pub mod nn;
pub mod preprocess;
pub mod raster;
pub mod synth;
pub mod train;

pub use raster::{AxisRect, Raster};
