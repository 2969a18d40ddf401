//! Human pose estimation from event-camera streams with a temporally densely
//! connected recurrent network.
//!
//! The crate is organised bottom-up:
//!
//! - [`events`]: event records, packet slicing, per-polarity histograms,
//!   normalisation, cropping, and the `EVT1`/text file formats.
//! - [`ndgrad`]: a small dense tensor engine with a reverse-mode tape,
//!   the convolution family, and Adam.
//! - [`posenet`]: encoder/deconvolution feature extractor, ConvLSTM, heatmap
//!   heads, attention gates, and the four unrolling variants.
//! - [`trainer`]: Gaussian targets, the masked heatmap loss, event-level
//!   augmentation, the plateau schedule, checkpoints, and the training loop.
//! - [`metrics`]: heatmap decoding, OKS/AP, PCK, and MPJPE.
//! - [`synthgen`]: an articulated stick-figure event simulator whose static
//!   limbs emit no events.

pub mod error;
pub mod events;
pub mod metrics;
pub mod ndgrad;
pub mod pose;
pub mod posenet;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
