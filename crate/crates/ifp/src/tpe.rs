//! Translation position extraction from raw speckle-modulated frames.
//!
//! The captured intensity couples a static object with a moving speckle, so
//! the motion can be read out without knowing either: averaging the frame
//! stack washes the speckle out and leaves the object part, dividing each
//! frame by that mean isolates its speckle part, and the cross-correlation
//! peak of each isolated speckle against a reference frame's gives the
//! relative integer shift. No sub-pixel interpolation is attempted; the scan
//! lattice is integer-pixel and the residual error budget is occasional
//! one-pixel misses.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_forward, fft_inverse, ImageGrid, ShiftVector, Spectrum};

/// Cross-correlation surface over all integer lags, plus its peak.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    /// Signed correlation values in DFT layout (lag (0,0) at index (0,0)).
    pub values: ImageGrid,
    /// Peak lag, unwrapped to the centered range (-W/2, W/2] x (-H/2, H/2].
    pub peak: ShiftVector,
    pub peak_value: f64,
    /// Largest value outside the peak's immediate 3x3 neighborhood.
    pub secondary_peak_value: f64,
}

impl CorrelationSurface {
    /// Peak-to-secondary-peak ratio, >= 1 by construction.
    pub fn confidence(&self) -> f64 {
        if self.secondary_peak_value > 0.0 && self.peak_value > 0.0 {
            self.peak_value / self.secondary_peak_value
        } else if self.peak_value > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

/// Per-frame shifts relative to a reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    /// One shift per frame; the reference frame maps to (0, 0) exactly.
    pub shifts: Vec<ShiftVector>,
    pub reference_index: usize,
    /// Peak-to-secondary-peak ratio per frame.
    pub confidence: Vec<f64>,
}

/// Pixel-wise arithmetic mean of a frame stack.
pub fn mean_image(frames: &[ImageGrid]) -> Result<ImageGrid> {
    let first = frames.first().ok_or(Error::EmptyInput("frames"))?;
    let mut acc = vec![0.0; first.samples().len()];
    for frame in frames {
        first.check_same_dims(frame)?;
        for (a, &v) in acc.iter_mut().zip(frame.samples()) {
            *a += v;
        }
    }
    let n = frames.len() as f64;
    ImageGrid::new(
        first.width(),
        first.height(),
        first.pixel_pitch(),
        acc.into_iter().map(|v| v / n).collect(),
    )
}

/// Isolate the speckle part of a frame as the ratio `frame / mean`, with the
/// denominator floored at `floor * max(mean)` so dark object regions cannot
/// blow the ratio up.
pub fn isolate_speckle(frame: &ImageGrid, mean: &ImageGrid, floor: f64) -> Result<ImageGrid> {
    frame.check_same_dims(mean)?;
    if !floor.is_finite() || floor <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "isolation floor must be positive, got {floor}"
        )));
    }
    let peak = mean.max_value();
    if peak <= 0.0 {
        return Err(Error::degenerate(
            "mean image has no positive samples; nothing to divide by",
        ));
    }
    let min_denom = floor * peak;
    frame.zip_map(mean, |f, m| f / m.max(min_denom))
}

fn check_non_constant(img: &ImageGrid, role: &str) -> Result<()> {
    if img.max_value() - img.min_value() == 0.0 {
        return Err(Error::degenerate(format!(
            "{role} input is constant; no correlation peak exists"
        )));
    }
    Ok(())
}

/// Unwrap a raw DFT-layout lag index into the centered range (-n/2, n/2].
fn unwrap_lag(i: usize, n: usize) -> i32 {
    if i <= n / 2 {
        i as i32
    } else {
        (i as i64 - n as i64) as i32
    }
}

/// Locate the maximum of a DFT-layout surface; ties break toward the
/// lexicographically smallest centered (dy, dx).
fn locate_peak(values: &ImageGrid) -> (ShiftVector, f64) {
    let (w, h) = (values.width(), values.height());
    let mut best_value = f64::NEG_INFINITY;
    let mut best = ShiftVector::new(0, 0);
    for iy in 0..h {
        let dy = unwrap_lag(iy, h);
        for ix in 0..w {
            let v = values.get(ix, iy);
            if v < best_value {
                continue;
            }
            let dx = unwrap_lag(ix, w);
            if v > best_value || (dy, dx) < (best.dy, best.dx) {
                best_value = v;
                best = ShiftVector::new(dx, dy);
            }
        }
    }
    (best, best_value)
}

/// Largest value at circular Chebyshev distance > 1 from the peak.
fn secondary_peak(values: &ImageGrid, peak: ShiftVector) -> f64 {
    let (w, h) = (values.width(), values.height());
    let px = peak.dx.rem_euclid(w as i32) as usize;
    let py = peak.dy.rem_euclid(h as i32) as usize;
    let mut second = f64::NEG_INFINITY;
    for iy in 0..h {
        let ddy = circular_distance(iy, py, h);
        for ix in 0..w {
            if ddy <= 1 && circular_distance(ix, px, w) <= 1 {
                continue;
            }
            second = second.max(values.get(ix, iy));
        }
    }
    if second.is_finite() {
        second
    } else {
        // Surface too small to have any excluded-zone exterior.
        values.get(px, py)
    }
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn correlation_surface_from_spectra(fa: &Spectrum, fb: &Spectrum) -> Result<CorrelationSurface> {
    normalized_surface(fa, fb, None)
}

/// Correlation surface from two field spectra, optionally with per-bin band
/// weighting and amplitude whitening of the cross power.
fn normalized_surface(
    fa: &Spectrum,
    fb: &Spectrum,
    band: Option<&[f64]>,
) -> Result<CorrelationSurface> {
    let mut cross: Vec<Complex<f64>> = fa
        .samples()
        .iter()
        .zip(fb.samples())
        .map(|(&a, &b)| a.conj() * b)
        .collect();
    if let Some(band) = band {
        let mean_mag = cross.iter().map(|c| c.norm()).sum::<f64>() / cross.len() as f64;
        let eps = WHITENING_EPS_REL * mean_mag;
        for (c, &w) in cross.iter_mut().zip(band) {
            *c = *c * (w * w) / (c.norm() + eps);
        }
    }
    let values = fft_inverse(&Spectrum::new(
        fa.width(),
        fa.height(),
        fa.pixel_pitch(),
        cross,
    )?);
    let (peak, peak_value) = locate_peak(&values);
    let secondary_peak_value = secondary_peak(&values, peak);
    Ok(CorrelationSurface {
        values,
        peak,
        peak_value,
        secondary_peak_value,
    })
}

/// Per-bin Wiener-style signal weight from the ensemble power of the frame
/// stack's field spectra: `max(1 - floor/P, 0)` with the floor at a low
/// quantile of `P`. Noise is spectrally flat while the speckle signal is
/// confined to the OTF passband, so noise-only bins fall at or below the
/// floor and drop out.
fn band_weight(specs: &[Spectrum]) -> Vec<f64> {
    let n = specs[0].samples().len();
    let mut power = vec![0.0f64; n];
    for spec in specs {
        for (acc, c) in power.iter_mut().zip(spec.samples()) {
            *acc += c.norm_sqr();
        }
    }
    let count = specs.len() as f64;
    for p in power.iter_mut() {
        *p /= count;
    }
    let mut sorted = power.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[((n as f64 * NOISE_FLOOR_QUANTILE) as usize).min(n - 1)];
    power
        .into_iter()
        .map(|p| if p > floor { 1.0 - floor / p } else { 0.0 })
        .collect()
}

/// Circular cross-correlation of the zero-mean versions of `a` and `b`.
///
/// The surface value at lag `u` is `sum_v a0(v) * b0(v + u)`, so if `b` is `a`
/// circularly shifted by `s` the peak lands at `s`. Raw ratio images carry a
/// mean near one whose DC term would put a flat pedestal under the surface;
/// subtracting each input's mean first keeps the peak delta-like.
pub fn cross_correlate(a: &ImageGrid, b: &ImageGrid) -> Result<CorrelationSurface> {
    a.check_same_dims(b)?;
    check_non_constant(a, "first correlation")?;
    check_non_constant(b, "second correlation")?;
    let (ma, mb) = (a.mean(), b.mean());
    let a0 = a.map(|v| v - ma)?;
    let b0 = b.map(|v| v - mb)?;
    correlation_surface_from_spectra(&fft_forward(&a0), &fft_forward(&b0))
}

/// Zero-padded (linear, non-circular) variant of [`cross_correlate`].
///
/// Pads both zero-mean inputs to double size before transforming, so content
/// never wraps; lags up to the full input extent are observable. Costs four
/// times the transform work of the circular version.
pub fn cross_correlate_padded(a: &ImageGrid, b: &ImageGrid) -> Result<CorrelationSurface> {
    a.check_same_dims(b)?;
    check_non_constant(a, "first correlation")?;
    check_non_constant(b, "second correlation")?;
    let (ma, mb) = (a.mean(), b.mean());
    let a0 = zero_pad_double(&a.map(|v| v - ma)?)?;
    let b0 = zero_pad_double(&b.map(|v| v - mb)?)?;
    correlation_surface_from_spectra(&fft_forward(&a0), &fft_forward(&b0))
}

/// Tuning knobs for [`extract_positions_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeOptions {
    /// Denominator floor for [`isolate_speckle`], as a fraction of the mean
    /// image's maximum.
    pub isolation_floor: f64,
    /// Use padded (non-circular) correlation. Circular is the default: scan
    /// shifts are small relative to the field, and it halves the cost.
    pub padded_correlation: bool,
    /// Weight each centered ratio image by its own denominator before
    /// correlating. Ratio noise scales inversely with the mean image, so this
    /// is inverse-variance weighting: dark object regions, where the ratio is
    /// amplified sensor noise rather than speckle, stop dominating the
    /// surface. Off means plain zero-mean ratios.
    pub brightness_weighting: bool,
    /// Normalize the cross-power spectrum before peak search: bins whose
    /// ensemble power over the frame stack shows no excess above the noise
    /// floor are suppressed (the speckle signal is band-limited by the OTF,
    /// the noise is not), and the rest are amplitude-whitened so the
    /// correlation peak is delta-like instead of PSF-wide. Off means the
    /// plain correlation surface decides the peak.
    pub spectral_normalization: bool,
}

impl Default for TpeOptions {
    fn default() -> Self {
        Self {
            isolation_floor: 1e-3,
            padded_correlation: false,
            brightness_weighting: true,
            spectral_normalization: true,
        }
    }
}

/// Quantile of the ensemble bin power taken as the noise floor. The OTF
/// passband covers only a small fraction of the bins, so a low quantile
/// lands on noise-only bins.
const NOISE_FLOOR_QUANTILE: f64 = 0.25;

/// Whitening regularizer relative to the mean cross-power magnitude; keeps
/// noise-dominated bins from being boosted to unit weight.
const WHITENING_EPS_REL: f64 = 1.0;

/// Extract per-frame translations relative to `reference_index`.
///
/// Computes the mean image, isolates each frame's speckle part, and locates
/// each correlation peak against the reference's isolated speckle. Per-frame
/// work is independent; results do not depend on scheduling.
pub fn extract_positions(
    frames: &[ImageGrid],
    reference_index: usize,
    floor: f64,
) -> Result<ExtractionResult> {
    extract_positions_with(
        frames,
        reference_index,
        TpeOptions {
            isolation_floor: floor,
            ..TpeOptions::default()
        },
    )
}

/// [`extract_positions`] with full control over the correlation setup.
pub fn extract_positions_with(
    frames: &[ImageGrid],
    reference_index: usize,
    opts: TpeOptions,
) -> Result<ExtractionResult> {
    if frames.len() < 2 {
        return Err(Error::CountMismatch {
            what: "frames (need at least 2)",
            expected: 2,
            actual: frames.len(),
        });
    }
    if reference_index >= frames.len() {
        return Err(Error::IndexOutOfRange {
            what: "frames",
            index: reference_index,
            len: frames.len(),
        });
    }
    let mean = mean_image(frames)?;
    let weight = correlation_weight(&mean, opts)?;
    let specs: Vec<Spectrum> = frames
        .par_iter()
        .enumerate()
        .map(|(n, frame)| -> Result<Spectrum> {
            let run = || -> Result<Spectrum> {
                let isolated = isolate_speckle(frame, &mean, opts.isolation_floor)?;
                let field = weighted_centered(&isolated, &weight)?;
                check_non_constant(&field, "isolated speckle")?;
                if opts.padded_correlation {
                    Ok(fft_forward(&zero_pad_double(&field)?))
                } else {
                    Ok(fft_forward(&field))
                }
            };
            run().map_err(|e| e.in_frame(n))
        })
        .collect::<Result<_>>()?;
    let band = if opts.spectral_normalization {
        Some(band_weight(&specs))
    } else {
        None
    };

    let per_frame: Vec<(ShiftVector, f64)> = specs
        .par_iter()
        .enumerate()
        .map(|(n, spec)| -> Result<(ShiftVector, f64)> {
            let surface = normalized_surface(&specs[reference_index], spec, band.as_deref())
                .map_err(|e| e.in_frame(n))?;
            Ok((surface.peak, surface.confidence()))
        })
        .collect::<Result<_>>()?;

    let mut shifts: Vec<ShiftVector> = per_frame.iter().map(|&(s, _)| s).collect();
    let confidence: Vec<f64> = per_frame.iter().map(|&(_, c)| c).collect();
    // The reference's autocorrelation peaks at the origin by definition.
    shifts[reference_index] = ShiftVector::new(0, 0);
    Ok(ExtractionResult {
        shifts,
        reference_index,
        confidence,
    })
}

/// Per-pixel correlation weight: the floored ratio denominator when
/// brightness weighting is on, otherwise uniform.
fn correlation_weight(mean: &ImageGrid, opts: TpeOptions) -> Result<ImageGrid> {
    if !opts.brightness_weighting {
        return ImageGrid::filled(mean.width(), mean.height(), mean.pixel_pitch(), 1.0);
    }
    let peak = mean.max_value();
    if peak <= 0.0 {
        return Err(Error::degenerate(
            "mean image has no positive samples; nothing to weight by",
        ));
    }
    let min_denom = opts.isolation_floor * peak;
    mean.map(|m| m.max(min_denom))
}

/// Weighted zero-centering: `w * (img - c)` with `c` the weighted mean, so
/// the field sums to zero and the static weight itself contributes no
/// correlation structure.
fn weighted_centered(img: &ImageGrid, weight: &ImageGrid) -> Result<ImageGrid> {
    img.check_same_dims(weight)?;
    let wsum: f64 = weight.samples().iter().sum();
    let c = img
        .samples()
        .iter()
        .zip(weight.samples())
        .map(|(&v, &w)| v * w)
        .sum::<f64>()
        / wsum;
    img.zip_map(weight, |v, w| w * (v - c))
}

fn zero_pad_double(img: &ImageGrid) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    ImageGrid::from_fn(2 * w, 2 * h, img.pixel_pitch(), |x, y| {
        if x < w && y < h {
            img.get(x, y)
        } else {
            0.0
        }
    })
}
