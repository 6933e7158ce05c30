//! JSON pipeline configuration.
//!
//! Every field has a default matching the reference simulation study
//! (10 mm aperture, 300 mm focal length, 632 nm, 3.45 um pixels, 9x9 scan at
//! 10 px, 0.1% noise variance), so `{}` is a valid config. Unknown keys are
//! rejected to catch typos.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ifp::optics::OpticalConfig;
use ifp::recon::{FrameOrder, ReconOptions};
use ifp::tpe::TpeOptions;

use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed for noise streams; the CLI `--seed` flag overrides it.
    pub seed: u64,
    pub optical: OpticalSection,
    pub object: ObjectSection,
    pub scan: ScanSection,
    pub speckle: SpeckleSection,
    pub noise: NoiseSection,
    pub tpe: TpeSection,
    pub recon: ReconSection,
    pub sweep: SweepSection,
    pub paths: PathsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            optical: OpticalSection::default(),
            object: ObjectSection::default(),
            scan: ScanSection::default(),
            speckle: SpeckleSection::default(),
            noise: NoiseSection::default(),
            tpe: TpeSection::default(),
            recon: ReconSection::default(),
            sweep: SweepSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalSection {
    pub aperture_diameter_mm: f64,
    pub focal_length_mm: f64,
    pub wavelength_nm: f64,
    pub pixel_pitch_um: f64,
}

impl Default for OpticalSection {
    fn default() -> Self {
        Self {
            aperture_diameter_mm: 10.0,
            focal_length_mm: 300.0,
            wavelength_nm: 632.0,
            pixel_pitch_um: 3.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectSection {
    pub width: usize,
    pub height: usize,
}

impl Default for ObjectSection {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub n_per_side: usize,
    pub step_px: u32,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            n_per_side: 9,
            step_px: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeckleSection {
    pub seed: u64,
    /// Gaussian grain radius in pixels; 0 means per-pixel white speckle.
    pub correlation_length_px: f64,
}

impl Default for SpeckleSection {
    fn default() -> Self {
        Self {
            seed: 99,
            correlation_length_px: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub variance_ratio: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            variance_ratio: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpeSection {
    pub reference_index: usize,
    pub floor: f64,
    pub padded_correlation: bool,
    pub brightness_weighting: bool,
    pub spectral_normalization: bool,
}

impl Default for TpeSection {
    fn default() -> Self {
        let defaults = TpeOptions::default();
        Self {
            reference_index: 0,
            floor: defaults.isolation_floor,
            padded_correlation: defaults.padded_correlation,
            brightness_weighting: defaults.brightness_weighting,
            spectral_normalization: defaults.spectral_normalization,
        }
    }
}

impl TpeSection {
    pub fn options(&self) -> TpeOptions {
        TpeOptions {
            isolation_floor: self.floor,
            padded_correlation: self.padded_correlation,
            brightness_weighting: self.brightness_weighting,
            spectral_normalization: self.spectral_normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconSection {
    pub max_iterations: usize,
    pub convergence_tolerance: f64,
    /// `sequential` or `seeded-random`.
    pub frame_order: String,
    /// Shuffle seed when `frame_order` is `seeded-random`.
    pub order_seed: u64,
    pub clamp_nonnegative: bool,
}

impl Default for ReconSection {
    fn default() -> Self {
        let defaults = ReconOptions::default();
        Self {
            max_iterations: defaults.max_iterations,
            convergence_tolerance: defaults.convergence_tolerance,
            frame_order: "sequential".into(),
            order_seed: 0,
            clamp_nonnegative: defaults.clamp_nonnegative,
        }
    }
}

impl ReconSection {
    pub fn options(&self, clamp_override: Option<bool>) -> Result<ReconOptions> {
        let frame_order = match self.frame_order.as_str() {
            "sequential" => FrameOrder::Sequential,
            "seeded-random" => FrameOrder::SeededRandom {
                seed: self.order_seed,
            },
            other => {
                return Err(CliError::config(format!(
                    "recon.frame_order must be \"sequential\" or \"seeded-random\", got \"{other}\""
                )))
            }
        };
        Ok(ReconOptions {
            max_iterations: self.max_iterations,
            convergence_tolerance: self.convergence_tolerance,
            frame_order,
            clamp_nonnegative: clamp_override.unwrap_or(self.clamp_nonnegative),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub levels: Vec<f64>,
    pub trials: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            levels: vec![0.005, 0.01, 0.05, 0.1, 0.2],
            trials: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Optional IFPM matrix to use as the object instead of the bundled
    /// procedural resolution target.
    pub object: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn optical_config(&self) -> OpticalConfig {
        OpticalConfig {
            aperture_diameter_mm: self.optical.aperture_diameter_mm,
            focal_length_mm: self.optical.focal_length_mm,
            wavelength_nm: self.optical.wavelength_nm,
            pixel_pitch_um: self.optical.pixel_pitch_um,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optical_config()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.object.width == 0 || self.object.height == 0 {
            return Err(CliError::config("object dimensions must be positive"));
        }
        if self.scan.n_per_side == 0 || self.scan.step_px == 0 {
            return Err(CliError::config(
                "scan.n_per_side and scan.step_px must be positive",
            ));
        }
        let n_frames = self.scan.n_per_side * self.scan.n_per_side;
        if self.tpe.reference_index >= n_frames {
            return Err(CliError::config(format!(
                "tpe.reference_index {} out of range for {} frames",
                self.tpe.reference_index, n_frames
            )));
        }
        if self.tpe.floor.is_nan() || self.tpe.floor <= 0.0 {
            return Err(CliError::config("tpe.floor must be positive"));
        }
        if self.noise.variance_ratio.is_nan() || self.noise.variance_ratio < 0.0 {
            return Err(CliError::config(
                "noise.variance_ratio must be non-negative",
            ));
        }
        if self.speckle.correlation_length_px.is_nan() || self.speckle.correlation_length_px < 0.0 {
            return Err(CliError::config(
                "speckle.correlation_length_px must be non-negative",
            ));
        }
        if self.recon.max_iterations == 0 {
            return Err(CliError::config("recon.max_iterations must be at least 1"));
        }
        if self.recon.convergence_tolerance.is_nan() || self.recon.convergence_tolerance < 0.0 {
            return Err(CliError::config(
                "recon.convergence_tolerance must be non-negative",
            ));
        }
        if self.sweep.levels.is_empty() || self.sweep.trials == 0 {
            return Err(CliError::config(
                "sweep.levels must be non-empty and sweep.trials at least 1",
            ));
        }
        // Re-parse the frame order string.
        self.recon.options(None).map(|_| ())
    }
}

/// Parse and validate a JSON configuration file.
///
/// Parse failures (including unknown keys) are reported with the line and
/// column from the JSON parser.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let config: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
