//! Acoustic feedback cancellation with a multi-delay frequency-domain Kalman
//! filter, signal decorrelation extensions and a closed-loop simulator.
//!
//! The crate is organized bottom-up:
//!
//! * [`dsp`]: block segmentation, transforms, overlap-save partitioned filtering
//! * [`kalman`]: the partitioned Kalman filter and the per-hop [`MdfFilter`]
//! * [`decorrelate`]: vibrato, non-linear distortion, THD tools, energy-decay operator
//! * [`prediction`]: LPC prewhitening of the adaptation path
//! * [`sim`]: closed-loop feedback simulation and batch evaluation
//! * [`metrics`] and [`io`]: system distance, WAV/CSV/SVG output, resampling
//! * [`synth`]: deterministic test sentence and room response

// `!(x > 0.0)` is used deliberately so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffer;
pub mod decorrelate;
pub mod dsp;
pub mod error;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod prediction;
pub mod sim;
pub mod synth;

pub use buffer::SampleBuffer;
pub use error::{Error, Result};
pub use kalman::{KalmanParams, MdfFilter};
