//! Diffraction-limited incoherent forward model.
//!
//! A clear circular pupil of diameter `D` imaged at focal length `f` and
//! wavelength `λ` passes intensity frequencies up to the incoherent cutoff
//! `D/(λf)`; its OTF is the autocorrelation of the pupil, the classic "chat"
//! profile. The simulator realizes speckle translation by cropping windows out
//! of a padded master canvas, which avoids the circular wraparound a physical
//! scan stage cannot produce, and injects seeded Gaussian noise per frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_forward, fft_inverse, window_crop, ImageGrid, ShiftVector};
use crate::seeding::stream_seed;

/// Positive floor applied to speckle samples so ratio images stay bounded.
pub const SPECKLE_FLOOR: f64 = 1.0 / 65536.0;

/// Physical parameters of the imaging system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalConfig {
    pub aperture_diameter_mm: f64,
    pub focal_length_mm: f64,
    pub wavelength_nm: f64,
    pub pixel_pitch_um: f64,
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("aperture_diameter_mm", self.aperture_diameter_mm),
            ("focal_length_mm", self.focal_length_mm),
            ("wavelength_nm", self.wavelength_nm),
            ("pixel_pitch_um", self.pixel_pitch_um),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidOpticalConfig(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Incoherent cutoff frequency `D/(λf)` in cycles per millimeter.
    pub fn cutoff_frequency(&self) -> f64 {
        let wavelength_mm = self.wavelength_nm * 1e-6;
        self.aperture_diameter_mm / (wavelength_mm * self.focal_length_mm)
    }

    /// Detector sampling frequency in cycles per millimeter.
    pub fn sampling_frequency(&self) -> f64 {
        1000.0 / self.pixel_pitch_um
    }

    /// Whether the detector samples at or above twice the incoherent cutoff.
    ///
    /// This is a report, not a gate: undersampled configurations still run,
    /// they just alias.
    pub fn is_oversampled(&self) -> bool {
        self.sampling_frequency() >= 2.0 * self.cutoff_frequency()
    }
}

/// OTF sampled on a DFT frequency grid, plus the cutoff it encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalModel {
    /// Real values in [0, 1], DFT layout, `otf(0,0) = 1`.
    pub otf: ImageGrid,
    /// Cycles per millimeter.
    pub cutoff_frequency: f64,
    /// The configuration the OTF was built from.
    pub config: OpticalConfig,
}

/// Autocorrelation of a clear circular pupil at normalized radius `rho`.
///
/// `rho` is radial frequency over the incoherent cutoff; the value is 1 at 0
/// and falls to 0 at 1.
pub fn pupil_autocorrelation(rho: f64) -> f64 {
    if rho <= 0.0 {
        return 1.0;
    }
    if rho >= 1.0 {
        return 0.0;
    }
    let v = (2.0 / std::f64::consts::PI) * (rho.acos() - rho * (1.0 - rho * rho).sqrt());
    v.clamp(0.0, 1.0)
}

/// Signed DFT index: 0, 1, …, n/2, -(n/2 - 1), …, -1 for even n.
fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Build the diffraction-limited OTF on the DFT frequency grid of a
/// `width`×`height` image sampled at the config's pixel pitch.
pub fn build_otf(config: &OpticalConfig, width: usize, height: usize) -> Result<OpticalModel> {
    config.validate()?;
    if width < 2 || height < 2 {
        return Err(Error::InvalidDimensions { width, height });
    }
    let cutoff = config.cutoff_frequency();
    // Frequency step per DFT bin, cycles per millimeter.
    let fx_step = 1000.0 / (width as f64 * config.pixel_pitch_um);
    let fy_step = 1000.0 / (height as f64 * config.pixel_pitch_um);
    let otf = ImageGrid::from_fn(width, height, config.pixel_pitch_um, |x, y| {
        let fx = signed_index(x, width) as f64 * fx_step;
        let fy = signed_index(y, height) as f64 * fy_step;
        let radial = fx.hypot(fy);
        if radial == 0.0 {
            1.0
        } else {
            pupil_autocorrelation(radial / cutoff)
        }
    })?;
    Ok(OpticalModel {
        otf,
        cutoff_frequency: cutoff,
        config: *config,
    })
}

/// Deterministic random illumination pattern in `(0, 1]`.
///
/// `correlation_length = 0` gives i.i.d. uniform samples; a positive value
/// applies a Gaussian low-pass of that radius (in pixels) and rescales the
/// result back to the full range. Samples never drop below [`SPECKLE_FLOOR`].
pub fn generate_speckle(
    seed: u64,
    width: usize,
    height: usize,
    correlation_length: f64,
) -> Result<ImageGrid> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    if !correlation_length.is_finite() || correlation_length < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "correlation_length must be non-negative, got {correlation_length}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..width * height)
        .map(|_| 1.0 - rng.random::<f64>())
        .collect();
    if correlation_length == 0.0 {
        return ImageGrid::new(
            width,
            height,
            1.0,
            raw.into_iter().map(|v| v.max(SPECKLE_FLOOR)).collect(),
        );
    }

    // Gaussian blur via the frequency domain: a spatial kernel of radius L
    // has transfer exp(-2 pi^2 L^2 f^2) with f in cycles per pixel.
    let img = ImageGrid::new(width, height, 1.0, raw)?;
    let spec = fft_forward(&img);
    let mut filtered = spec.samples().to_vec();
    let two_pi_sq = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    for y in 0..height {
        let fy = signed_index(y, height) as f64 / height as f64;
        for x in 0..width {
            let fx = signed_index(x, width) as f64 / width as f64;
            let gain =
                (-two_pi_sq * correlation_length * correlation_length * (fx * fx + fy * fy)).exp();
            filtered[y * width + x] *= gain;
        }
    }
    let smooth = fft_inverse(&crate::grid::Spectrum::new(width, height, 1.0, filtered)?);
    let (min, max) = (smooth.min_value(), smooth.max_value());
    if max - min <= f64::EPSILON * max.abs().max(1.0) {
        return ImageGrid::filled(width, height, 1.0, 1.0);
    }
    smooth.map(|v| SPECKLE_FLOOR + (1.0 - SPECKLE_FLOOR) * (v - min) / (max - min))
}

/// Band-limit an intensity field by the OTF, without clamping.
pub(crate) fn band_limit(intensity: &ImageGrid, model: &OpticalModel) -> Result<ImageGrid> {
    model.otf.check_same_dims(intensity)?;
    let spec = fft_forward(intensity);
    let filtered: Vec<_> = spec
        .samples()
        .iter()
        .zip(model.otf.samples())
        .map(|(&s, &o)| s * o)
        .collect();
    Ok(fft_inverse(&crate::grid::Spectrum::new(
        intensity.width(),
        intensity.height(),
        intensity.pixel_pitch(),
        filtered,
    )?))
}

/// Image an intensity distribution through the incoherent system.
///
/// Negative ringing from the band limit is clamped to zero; the DC gain of 1
/// otherwise preserves total flux.
pub fn incoherent_image(intensity: &ImageGrid, model: &OpticalModel) -> Result<ImageGrid> {
    if intensity.min_value() < 0.0 {
        return Err(Error::InvalidParameter(
            "intensity input must be non-negative".into(),
        ));
    }
    band_limit(intensity, model)?.map(|v| v.max(0.0))
}

/// Add zero-mean Gaussian noise with variance `variance_ratio` times the
/// sample variance of `img`, then clamp negatives to zero.
pub fn add_gaussian_noise(img: &ImageGrid, variance_ratio: f64, seed: u64) -> Result<ImageGrid> {
    if !variance_ratio.is_finite() || variance_ratio < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "variance_ratio must be non-negative, got {variance_ratio}"
        )));
    }
    let sigma = (variance_ratio * img.variance()).sqrt();
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageGrid::new(
        img.width(),
        img.height(),
        img.pixel_pitch(),
        img.samples()
            .iter()
            .map(|&v| (v + normal.sample(&mut rng)).max(0.0))
            .collect(),
    )
}

/// Square scan lattice of `n_per_side`² shifts with the given pixel step,
/// centered on zero and ordered row-major.
///
/// Odd `n_per_side` centers exactly; even counts sit half a step toward the
/// positive side.
pub fn generate_scan_grid(n_per_side: usize, step: u32) -> Result<Vec<ShiftVector>> {
    if n_per_side == 0 || step == 0 {
        return Err(Error::InvalidParameter(
            "scan grid needs n_per_side >= 1 and step >= 1".into(),
        ));
    }
    let offset = ((n_per_side - 1) / 2) as i64;
    let coord = |i: usize| ((i as i64 - offset) * step as i64) as i32;
    let mut shifts = Vec::with_capacity(n_per_side * n_per_side);
    for iy in 0..n_per_side {
        for ix in 0..n_per_side {
            shifts.push(ShiftVector::new(coord(ix), coord(iy)));
        }
    }
    Ok(shifts)
}

/// Canvas coordinate of the zero-shift window origin for a master canvas of
/// the given size, or an error if any shifted window would not fit.
///
/// The window for shift `v` starts at `anchor - v`: moving the window against
/// the shift makes the cropped content move with it. Slack beyond the shift
/// span is split evenly so a symmetric scan sits centered on the canvas.
pub fn canvas_anchor(
    frame_width: usize,
    frame_height: usize,
    master_width: usize,
    master_height: usize,
    shifts: &[ShiftVector],
) -> Result<ShiftVector> {
    let anchor = anchor_arithmetic(
        frame_width,
        frame_height,
        master_width,
        master_height,
        shifts,
    )?;
    let fits = |origin: i64, frame: usize, master: usize| {
        origin >= 0 && origin + frame as i64 <= master as i64
    };
    for &shift in shifts {
        let off = window_offset(anchor, shift);
        if !fits(off.dx as i64, frame_width, master_width)
            || !fits(off.dy as i64, frame_height, master_height)
        {
            return Err(Error::WindowOutOfRange {
                dx: off.dx as i64,
                dy: off.dy as i64,
                window_width: frame_width,
                window_height: frame_height,
                canvas_width: master_width,
                canvas_height: master_height,
            });
        }
    }
    Ok(anchor)
}

/// Anchor placement without the fit check; callers that crop per frame get
/// their bounds errors (with frame indices) from the crop itself.
fn anchor_arithmetic(
    frame_width: usize,
    frame_height: usize,
    master_width: usize,
    master_height: usize,
    shifts: &[ShiftVector],
) -> Result<ShiftVector> {
    if shifts.is_empty() {
        return Err(Error::EmptyInput("shifts"));
    }
    let axis = |frame: usize, master: usize, lo: i64, hi: i64| -> i64 {
        let slack = master as i64 - frame as i64 - (hi - lo);
        hi + slack.div_euclid(2)
    };
    let (min_dx, max_dx) = min_max(shifts.iter().map(|s| s.dx as i64));
    let (min_dy, max_dy) = min_max(shifts.iter().map(|s| s.dy as i64));
    let ax = axis(frame_width, master_width, min_dx, max_dx);
    let ay = axis(frame_height, master_height, min_dy, max_dy);
    Ok(ShiftVector::new(ax as i32, ay as i32))
}

/// Top-left canvas offset of the window realizing `shift`.
pub fn window_offset(anchor: ShiftVector, shift: ShiftVector) -> ShiftVector {
    ShiftVector::new(anchor.dx - shift.dx, anchor.dy - shift.dy)
}

/// Tight canvas dimensions for a frame size and shift set.
pub fn canvas_dims(
    frame_width: usize,
    frame_height: usize,
    shifts: &[ShiftVector],
) -> Result<(usize, usize)> {
    if shifts.is_empty() {
        return Err(Error::EmptyInput("shifts"));
    }
    let (min_dx, max_dx) = min_max(shifts.iter().map(|s| s.dx as i64));
    let (min_dy, max_dy) = min_max(shifts.iter().map(|s| s.dy as i64));
    Ok((
        frame_width + (max_dx - min_dx) as usize,
        frame_height + (max_dy - min_dy) as usize,
    ))
}

fn min_max(values: impl Iterator<Item = i64>) -> (i64, i64) {
    values.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// One simulated speckle-scan data set.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSet {
    pub frames: Vec<ImageGrid>,
    /// Ground-truth shifts; `None` when loaded from an experiment.
    pub true_shifts: Option<Vec<ShiftVector>>,
    pub config: OpticalConfig,
    pub seed: u64,
}

/// Simulate one frame per shift: crop the speckle window, modulate the
/// object, image incoherently, and add per-frame seeded noise.
///
/// Each frame's noise stream derives from `(seed, frame index)`, so the
/// result is identical regardless of execution order or thread count.
pub fn simulate_acquisition(
    object: &ImageGrid,
    master_speckle: &ImageGrid,
    shifts: &[ShiftVector],
    model: &OpticalModel,
    variance_ratio: f64,
    seed: u64,
) -> Result<AcquisitionSet> {
    if object.min_value() < 0.0 {
        return Err(Error::InvalidParameter(
            "object must be non-negative".into(),
        ));
    }
    model.otf.check_same_dims(object)?;
    let anchor = anchor_arithmetic(
        object.width(),
        object.height(),
        master_speckle.width(),
        master_speckle.height(),
        shifts,
    )?;
    let frames: Vec<ImageGrid> = shifts
        .par_iter()
        .enumerate()
        .map(|(n, &shift)| -> Result<ImageGrid> {
            let run = || -> Result<ImageGrid> {
                let window = window_crop(
                    master_speckle,
                    window_offset(anchor, shift),
                    object.width(),
                    object.height(),
                )?;
                let modulated = object.zip_map(&window, |o, s| o * s)?;
                let imaged = incoherent_image(&modulated, model)?;
                add_gaussian_noise(&imaged, variance_ratio, stream_seed(seed, n as u64))
            };
            run().map_err(|e| e.in_frame(n))
        })
        .collect::<Result<_>>()?;
    Ok(AcquisitionSet {
        frames,
        true_shifts: Some(shifts.to_vec()),
        config: model.config,
        seed,
    })
}

/// Procedural resolution-bar test object.
///
/// A 4x4 layout of feature cells: bar groups of both orientations with
/// periods shrinking past the diffraction limit of the reference
/// configuration, plus solid blocks, discs, a checkerboard, and diagonal
/// stripes for broadband content. Bars are confined to their cells so the
/// object has no global periodicity for a correlator to alias onto.
pub fn resolution_target(width: usize, height: usize, pixel_pitch: f64) -> Result<ImageGrid> {
    const BACKGROUND: f64 = 0.05;
    const FOREGROUND: f64 = 1.0;
    // (cell row, cell col) -> feature; periods in pixels.
    #[derive(Clone, Copy)]
    enum Feature {
        Solid,
        Disc,
        VBars(usize),
        HBars(usize),
        Checker(usize),
        Diagonal(usize),
    }
    use Feature::*;
    const CELLS: [[Feature; 4]; 4] = [
        [Solid, VBars(16), HBars(16), Disc],
        [VBars(8), HBars(8), VBars(6), HBars(6)],
        [Checker(4), VBars(4), HBars(4), Diagonal(6)],
        [VBars(3), HBars(3), Disc, Solid],
    ];

    let cell_w = (width / 4).max(1);
    let cell_h = (height / 4).max(1);
    ImageGrid::from_fn(width, height, pixel_pitch, |x, y| {
        let (cx, cy) = ((x / cell_w).min(3), (y / cell_h).min(3));
        let (lx, ly) = (x - cx * cell_w, y - cy * cell_h);
        // Gutter around each cell.
        let pad_x = cell_w / 8;
        let pad_y = cell_h / 8;
        if lx < pad_x || ly < pad_y || lx >= cell_w - pad_x || ly >= cell_h - pad_y {
            return BACKGROUND;
        }
        let on = match CELLS[cy][cx] {
            Solid => true,
            Disc => {
                let rx = lx as f64 - cell_w as f64 / 2.0;
                let ry = ly as f64 - cell_h as f64 / 2.0;
                let r = (cell_w.min(cell_h) as f64) * 0.33;
                rx * rx + ry * ry <= r * r
            }
            VBars(p) => (lx - pad_x) % p < p / 2,
            HBars(p) => (ly - pad_y) % p < p / 2,
            Checker(p) => ((lx / p) + (ly / p)) % 2 == 0,
            Diagonal(p) => (lx + ly) % p < p / 2,
        };
        if on {
            FOREGROUND
        } else {
            BACKGROUND
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_config() -> OpticalConfig {
        OpticalConfig {
            aperture_diameter_mm: 10.0,
            focal_length_mm: 300.0,
            wavelength_nm: 632.0,
            pixel_pitch_um: 3.45,
        }
    }

    #[test]
    fn config_validation_and_nyquist_report() {
        assert!(reference_config().validate().is_ok());
        assert!(reference_config().is_oversampled());
        let bad = OpticalConfig {
            wavelength_nm: -1.0,
            ..reference_config()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cutoff_matches_independent_evaluation() {
        // D/(lambda f) with D = 10 mm, lambda = 632e-6 mm, f = 300 mm.
        let expected = 10.0 / (632e-6 * 300.0);
        let cutoff = reference_config().cutoff_frequency();
        assert!((cutoff - expected).abs() < 1e-9);
        assert!((cutoff - 52.74).abs() < 0.01);
    }

    #[test]
    fn otf_dc_is_exactly_one_and_band_limited() {
        let model = build_otf(&reference_config(), 64, 48).unwrap();
        assert_eq!(model.otf.get(0, 0), 1.0);
        let fx_step = 1000.0 / (64.0 * 3.45);
        let fy_step = 1000.0 / (48.0 * 3.45);
        for y in 0..48 {
            for x in 0..64 {
                let v = model.otf.get(x, y);
                assert!((0.0..=1.0).contains(&v));
                let fx = signed_index(x, 64) as f64 * fx_step;
                let fy = signed_index(y, 48) as f64 * fy_step;
                if fx.hypot(fy) > model.cutoff_frequency {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn pupil_autocorrelation_at_half_cutoff() {
        // (2/pi) * (arccos(0.5) - 0.5 * sqrt(0.75)), evaluated independently.
        let expected = 0.39100221895577075;
        assert!((pupil_autocorrelation(0.5) - expected).abs() < 1e-12);
        assert_eq!(pupil_autocorrelation(0.0), 1.0);
        assert_eq!(pupil_autocorrelation(1.0), 0.0);
        assert_eq!(pupil_autocorrelation(1.5), 0.0);
    }

    #[test]
    fn otf_is_radially_symmetric_and_monotone() {
        let model = build_otf(&reference_config(), 62, 62).unwrap();
        let w = 62;
        for y in 0..w {
            for x in 0..w {
                let mirror = model.otf.get((w - x) % w, (w - y) % w);
                assert_eq!(model.otf.get(x, y), mirror);
            }
        }
        let mut prev = f64::INFINITY;
        for x in 0..=w / 2 {
            let v = model.otf.get(x, 0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn speckle_is_deterministic_and_in_range() {
        let a = generate_speckle(5, 64, 64, 0.0).unwrap();
        let b = generate_speckle(5, 64, 64, 0.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_speckle(6, 64, 64, 0.0).unwrap());
        assert!(a.min_value() >= SPECKLE_FLOOR);
        assert!(a.max_value() <= 1.0);
    }

    #[test]
    fn uniform_speckle_statistics() {
        let s = generate_speckle(11, 256, 256, 0.0).unwrap();
        let mean = s.mean();
        assert!((0.48..=0.52).contains(&mean), "mean = {mean}");
        // Lag-1 autocorrelation of the centered samples along x.
        let var = s.variance();
        let mut lag = 0.0;
        let mut count = 0usize;
        for y in 0..256 {
            for x in 0..255 {
                lag += (s.get(x, y) - mean) * (s.get(x + 1, y) - mean);
                count += 1;
            }
        }
        let rho = lag / count as f64 / var;
        assert!(rho.abs() < 0.05, "lag-1 autocorrelation = {rho}");
    }

    #[test]
    fn correlated_speckle_is_smoother() {
        let s = generate_speckle(11, 128, 128, 3.0).unwrap();
        assert!(s.min_value() >= SPECKLE_FLOOR);
        assert!((s.max_value() - 1.0).abs() < 1e-12);
        let mean = s.mean();
        let var = s.variance();
        let mut lag = 0.0;
        for y in 0..128 {
            for x in 0..127 {
                lag += (s.get(x, y) - mean) * (s.get(x + 1, y) - mean);
            }
        }
        let rho = lag / (128.0 * 127.0) / var;
        assert!(rho > 0.8, "expected strong lag-1 correlation, got {rho}");
    }

    #[test]
    fn constant_input_passes_at_unit_gain() {
        let model = build_otf(&reference_config(), 32, 32).unwrap();
        let img = ImageGrid::filled(32, 32, 3.45, 0.7).unwrap();
        let out = incoherent_image(&img, &model).unwrap();
        for &v in out.samples() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_otf_is_identity() {
        let model = OpticalModel {
            otf: ImageGrid::filled(16, 16, 3.45, 1.0).unwrap(),
            cutoff_frequency: f64::INFINITY,
            config: reference_config(),
        };
        let img = generate_speckle(3, 16, 16, 0.0).unwrap();
        let img = ImageGrid::new(16, 16, 3.45, img.samples().to_vec()).unwrap();
        let out = incoherent_image(&img, &model).unwrap();
        for (a, b) in out.samples().iter().zip(img.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_is_conserved_before_clamping() {
        let model = build_otf(&reference_config(), 64, 64).unwrap();
        let img = resolution_target(64, 64, 3.45).unwrap();
        let raw = band_limit(&img, &model).unwrap();
        let rel = (raw.sum() - img.sum()).abs() / img.sum();
        assert!(rel < 1e-6, "relative flux error {rel}");
    }

    #[test]
    fn sub_rayleigh_pair_is_unresolved() {
        // Rayleigh spacing for the reference configuration is ~6.7 px; a 3 px
        // pair must blur into a single blob with essentially no central dip.
        let model = build_otf(&reference_config(), 64, 64).unwrap();
        let img = ImageGrid::from_fn(64, 64, 3.45, |x, y| {
            if y == 32 && (x == 31 || x == 34) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let out = incoherent_image(&img, &model).unwrap();
        let peak: f64 = (28..38).map(|x| out.get(x, 32)).fold(0.0, f64::max);
        let mid = out.get(32, 32).min(out.get(33, 32));
        assert!(peak > 0.0);
        assert!((peak - mid) / peak < 0.01, "dip = {}", (peak - mid) / peak);
    }

    #[test]
    fn noise_zero_is_identity_and_variance_tracks_target() {
        let img = ImageGrid::filled(256, 256, 1.0, 100.0)
            .unwrap()
            .zip_map(&generate_speckle(2, 256, 256, 0.0).unwrap(), |a, b| a + b)
            .unwrap();
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);

        // Large offset keeps every noisy sample positive, so the clamp never
        // fires and the residual is the raw noise.
        let ratio = 0.001;
        let noisy = add_gaussian_noise(&img, ratio, 9).unwrap();
        assert!(noisy.min_value() >= 0.0);
        let resid = noisy.zip_map(&img, |a, b| a - b).unwrap();
        let target = ratio * img.variance();
        let measured = resid.variance();
        assert!(
            (measured - target).abs() <= 0.1 * target,
            "measured {measured}, target {target}"
        );
    }

    #[test]
    fn scan_grid_layout() {
        let grid = generate_scan_grid(9, 10).unwrap();
        assert_eq!(grid.len(), 81);
        assert_eq!(grid[0], ShiftVector::new(-40, -40));
        assert_eq!(grid[80], ShiftVector::new(40, 40));
        assert_eq!(grid[40], ShiftVector::new(0, 0));
        let xs: std::collections::BTreeSet<i32> = grid.iter().map(|s| s.dx).collect();
        assert_eq!(
            xs.into_iter().collect::<Vec<_>>(),
            vec![-40, -30, -20, -10, 0, 10, 20, 30, 40]
        );

        assert_eq!(
            generate_scan_grid(1, 10).unwrap(),
            vec![ShiftVector::new(0, 0)]
        );
        assert_eq!(generate_scan_grid(8, 10).unwrap().len(), 64);
    }

    #[test]
    fn uniform_speckle_yields_diffraction_limited_frames() {
        let model = build_otf(&reference_config(), 32, 32).unwrap();
        let object = resolution_target(32, 32, 3.45).unwrap();
        let master = ImageGrid::filled(48, 48, 1.0, 1.0).unwrap();
        let shifts = generate_scan_grid(3, 4).unwrap();
        let set = simulate_acquisition(&object, &master, &shifts, &model, 0.0, 1).unwrap();
        assert_eq!(set.frames.len(), 9);
        let reference = incoherent_image(&object, &model).unwrap();
        for frame in &set.frames {
            assert_eq!(frame, &reference);
        }
    }

    #[test]
    fn acquisition_is_deterministic_and_rejects_small_canvas() {
        let model = build_otf(&reference_config(), 32, 32).unwrap();
        let object = resolution_target(32, 32, 3.45).unwrap();
        let master = generate_speckle(4, 48, 48, 0.0).unwrap();
        let shifts = generate_scan_grid(3, 4).unwrap();
        let a = simulate_acquisition(&object, &master, &shifts, &model, 0.01, 5).unwrap();
        let b = simulate_acquisition(&object, &master, &shifts, &model, 0.01, 5).unwrap();
        assert_eq!(a, b);

        let tight = generate_speckle(4, 33, 33, 0.0).unwrap();
        let err = simulate_acquisition(&object, &tight, &shifts, &model, 0.0, 5).unwrap_err();
        assert!(err.to_string().contains("frame"), "{err}");
    }

    #[test]
    fn noiseless_frames_stay_inside_the_passband() {
        let model = build_otf(&reference_config(), 64, 64).unwrap();
        let object = resolution_target(64, 64, 3.45).unwrap();
        let master = generate_speckle(8, 96, 96, 0.0).unwrap();
        let shifts = generate_scan_grid(3, 10).unwrap();
        let set = simulate_acquisition(&object, &master, &shifts, &model, 0.0, 3).unwrap();
        let fx_step = 1000.0 / (64.0 * 3.45);
        for frame in &set.frames {
            let spec = fft_forward(frame);
            let mut beyond = 0.0;
            let mut total = 0.0;
            for y in 0..64 {
                for x in 0..64 {
                    let fx = signed_index(x, 64) as f64 * fx_step;
                    let fy = signed_index(y, 64) as f64 * fx_step;
                    let e = spec.samples()[y * 64 + x].norm_sqr();
                    total += e;
                    if fx.hypot(fy) > model.cutoff_frequency {
                        beyond += e;
                    }
                }
            }
            assert!(
                beyond / total <= 1e-6,
                "beyond-cutoff ratio {}",
                beyond / total
            );
        }
    }

    #[test]
    fn canvas_anchor_centers_symmetric_scans() {
        let shifts = generate_scan_grid(9, 10).unwrap();
        let anchor = canvas_anchor(256, 256, 336, 336, &shifts).unwrap();
        assert_eq!(anchor, ShiftVector::new(40, 40));
        assert_eq!(canvas_dims(256, 256, &shifts).unwrap(), (336, 336));
        // Window for the most positive shift starts at the canvas origin.
        assert_eq!(
            window_offset(anchor, ShiftVector::new(40, 40)),
            ShiftVector::new(0, 0)
        );
    }

    #[test]
    fn resolution_target_is_physical() {
        let t = resolution_target(256, 256, 3.45).unwrap();
        assert!(t.min_value() >= 0.0);
        assert!(t.max_value() <= 1.0);
        assert!(t.variance() > 0.0);
    }
}
