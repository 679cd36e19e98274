//! Lane detection by drawing.
//!
//! The engine represents a lane as a polyline with one vertex per image row
//! and detects lanes by greedily following per-pixel categorical
//! distributions over the horizontal step to the adjacent row. The crate
//! covers the full desk-scale loop:
//!
//! - [`geometry`]: polylines, resampling, affine annotation adjustment
//! - [`scenes`]: synthetic labeled scenes and photometric style presets
//! - [`targets`]: training targets (mask + step classes) with denoising
//!   perturbation, and ideal oracle fields for decoder tests
//! - [`net`]: a small convolutional encoder-decoder with manual
//!   backpropagation and Adam
//! - [`loss`]: binary/categorical negative log-likelihoods and the learned
//!   per-task log-variance weighting
//! - [`decoder`]: seed proposal, greedy drawing, per-row uncertainty
//! - [`eval`]: point-accuracy, IoU-F1 and precision/recall metrics
//!
//! Batch-level fan-outs (training batches, per-image decode and scoring,
//! dataset generation) run on rayon when the default `parallel` feature is
//! enabled and fall back to plain sequential iteration without it.

pub mod cluster;
pub mod dataset;
pub mod decoder;
pub mod eval;
pub mod geometry;
pub mod heads;
pub mod loss;
pub mod net;
pub mod parallel;
pub mod ppm;
pub mod scenes;
pub mod targets;
pub mod tensor;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("degenerate transform: scale must be nonzero")]
    DegenerateTransform,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class index {idx} out of range for half-support {half_support}")]
    IndexOutOfRange { idx: usize, half_support: usize },
    #[error("tensor format: {0}")]
    TensorFormat(String),
    #[error("seed ({0}, {1}) outside the image")]
    SeedOutOfBounds(u32, u32),
    #[error("lane step {0} exceeds half-support {1}")]
    UnsupportedSlope(i64, usize),
    #[error("unknown style preset {0:?}")]
    UnknownPreset(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Image height/width in pixels, the shared coordinate frame for all grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
}

impl ImageSize {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}
