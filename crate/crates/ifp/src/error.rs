//! Error type shared by all pipeline stages.

use thiserror::Error;

/// Errors produced by grid construction, the forward model, position
/// extraction, and reconstruction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("pixel pitch must be positive, got {0}")]
    InvalidPixelPitch(f64),

    #[error("non-finite sample at flat index {index}")]
    NonFiniteSample { index: usize },

    #[error(
        "dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}"
    )]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error(
        "window {window_width}x{window_height} at offset ({dx}, {dy}) exceeds \
         canvas {canvas_width}x{canvas_height}"
    )]
    WindowOutOfRange {
        dx: i64,
        dy: i64,
        window_width: usize,
        window_height: usize,
        canvas_width: usize,
        canvas_height: usize,
    },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("expected {expected} {what}, got {actual}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate input: {reason}")]
    DegenerateInput { reason: String },

    #[error("invalid optical configuration: {0}")]
    InvalidOpticalConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iteration}, frame {frame}: {source}")]
    Recon {
        iteration: usize,
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn degenerate(reason: impl Into<String>) -> Self {
        Error::DegenerateInput {
            reason: reason.into(),
        }
    }

    /// Tag an error with the frame index it occurred on.
    pub fn in_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    /// Tag an error with reconstruction loop context.
    pub fn in_recon(self, iteration: usize, frame: usize) -> Self {
        Error::Recon {
            iteration,
            frame,
            source: Box::new(self),
        }
    }

    /// True when the root cause is a numerical degeneracy (as opposed to a
    /// structural problem like mismatched dimensions).
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::DegenerateInput { .. } => true,
            Error::Frame { source, .. } | Error::Recon { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
