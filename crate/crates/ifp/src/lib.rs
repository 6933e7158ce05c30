//! Incoherent Fourier ptychography (IFP) with translation position extraction.
//!
//! IFP recovers spatial frequencies beyond the incoherent diffraction limit by
//! illuminating an object with a translated speckle pattern and iterating
//! between spatial and Fourier constraints over the captured frames. The usual
//! catch is that the per-frame speckle translations must be known; this crate
//! also implements a preprocessing step that recovers them directly from the
//! raw frames by isolating the moving speckle component (mean-image division)
//! and locating the cross-correlation peak of each frame against a reference.
//!
//! The crate is organized as a pipeline:
//!
//! - [`grid`]: 2D real/complex array types, FFTs, and canvas windowing.
//! - [`optics`]: diffraction-limited incoherent forward model — OTF
//!   construction, speckle generation, and the acquisition simulator.
//! - [`tpe`]: translation position extraction from raw frames.
//! - [`recon`]: the iterative object/pattern reconstruction engine.
//! - [`metrics`]: position-error statistics, image quality scores, and the
//!   noise-robustness sweep.
//!
//! Everything stochastic is a pure function of its inputs and an explicit
//! seed, so whole pipeline runs are reproducible bit for bit.

mod error;

pub mod grid;
pub mod metrics;
pub mod optics;
pub mod recon;
pub mod seeding;
pub mod tpe;

pub use error::{Error, Result};
pub use grid::{ImageGrid, ShiftVector, Spectrum};
pub use optics::{AcquisitionSet, OpticalConfig, OpticalModel};
pub use recon::{FrameOrder, ReconOptions, ReconState};
pub use tpe::{CorrelationSurface, ExtractionResult};
