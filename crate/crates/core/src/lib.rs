//! Fake-video detection from appearance, motion, and geometry volumes.
//!
//! Each modality gets its own 3D ConvNet classifier; per-clip logits are
//! fused by a weighted sum and clip verdicts are voted into a video verdict.
//! A procedural corpus generator supplies clips with known artifacts so
//! detectors and their Grad-CAM maps can be scored against ground truth.

pub mod cvr;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod gradcam;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor, TensorND};
