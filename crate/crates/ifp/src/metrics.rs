//! Quantitative evaluation: position-error statistics, reconstruction quality
//! scores, and the noise-robustness sweep.
//!
//! Position estimates are relative to an arbitrary reference frame, so error
//! reports first remove the constant offset that maps the reference frame's
//! estimate onto its ground truth. Image comparisons are mean-normalized
//! because the reconstruction recovers intensity only up to an overall
//! object/pattern scale split.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_forward, window_crop, ImageGrid, ShiftVector};
use crate::optics::{
    build_otf, canvas_anchor, canvas_dims, generate_speckle, simulate_acquisition, window_offset,
    OpticalConfig, OpticalModel,
};
use crate::seeding::stream_seed2;
use crate::tpe::extract_positions;

/// Real-valued per-frame position residual in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualVector {
    pub dx: f64,
    pub dy: f64,
}

/// Residual position errors after reference alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionErrorReport {
    /// `estimated - truth` per frame, after removing the reference offset.
    pub per_frame_error: Vec<ResidualVector>,
    /// Mean of `|dx|` over frames, pixels.
    pub mean_abs_x: f64,
    /// Mean of `|dy|` over frames, pixels.
    pub mean_abs_y: f64,
    /// Largest absolute error component over all frames, pixels.
    pub max_abs: f64,
}

/// Compare estimated shifts against ground truth.
///
/// The estimates carry an arbitrary constant offset (they are relative to the
/// reference frame), so the offset that maps the reference frame's estimate
/// onto its truth is subtracted from every error first.
pub fn position_errors(
    estimated: &[ShiftVector],
    truth: &[ShiftVector],
    reference_index: usize,
) -> Result<PositionErrorReport> {
    if estimated.is_empty() {
        return Err(Error::EmptyInput("estimated shifts"));
    }
    if estimated.len() != truth.len() {
        return Err(Error::CountMismatch {
            what: "truth shifts",
            expected: estimated.len(),
            actual: truth.len(),
        });
    }
    if reference_index >= estimated.len() {
        return Err(Error::IndexOutOfRange {
            what: "shifts",
            index: reference_index,
            len: estimated.len(),
        });
    }
    let off_x = estimated[reference_index].dx - truth[reference_index].dx;
    let off_y = estimated[reference_index].dy - truth[reference_index].dy;
    let per_frame_error: Vec<ResidualVector> = estimated
        .iter()
        .zip(truth)
        .map(|(e, t)| ResidualVector {
            dx: (e.dx - t.dx - off_x) as f64,
            dy: (e.dy - t.dy - off_y) as f64,
        })
        .collect();
    let n = per_frame_error.len() as f64;
    let mean_abs_x = per_frame_error.iter().map(|r| r.dx.abs()).sum::<f64>() / n;
    let mean_abs_y = per_frame_error.iter().map(|r| r.dy.abs()).sum::<f64>() / n;
    let max_abs = per_frame_error
        .iter()
        .map(|r| r.dx.abs().max(r.dy.abs()))
        .fold(0.0, f64::max);
    Ok(PositionErrorReport {
        per_frame_error,
        mean_abs_x,
        mean_abs_y,
        max_abs,
    })
}

/// Reconstruction quality relative to a ground-truth image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// Root-mean-square error between the mean-normalized images.
    pub rmse: f64,
    /// Peak signal-to-noise ratio in decibels; infinite when `rmse` is zero.
    pub psnr: f64,
    /// Fraction of the image's spectral energy beyond the OTF cutoff — a
    /// super-resolution indicator, near zero for any band-limited image.
    pub beyond_cutoff_energy_ratio: f64,
}

fn normalize_to_unit_mean(img: &ImageGrid, role: &str) -> Result<ImageGrid> {
    let mean = img.mean();
    if mean <= 0.0 {
        return Err(Error::degenerate(format!(
            "{role} image has non-positive mean; cannot normalize"
        )));
    }
    img.map(|v| v / mean)
}

/// Score a reconstruction against the ground-truth object.
pub fn image_quality(
    recon: &ImageGrid,
    truth: &ImageGrid,
    model: &OpticalModel,
) -> Result<QualityReport> {
    recon.check_same_dims(truth)?;
    if truth.variance() == 0.0 {
        return Err(Error::degenerate("truth image has zero variance"));
    }
    let recon_n = normalize_to_unit_mean(recon, "reconstruction")?;
    let truth_n = normalize_to_unit_mean(truth, "truth")?;
    let mse = recon_n
        .samples()
        .iter()
        .zip(truth_n.samples())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / recon_n.samples().len() as f64;
    let rmse = mse.sqrt();
    let psnr = if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (truth_n.max_value() / rmse).log10()
    };
    Ok(QualityReport {
        rmse,
        psnr,
        beyond_cutoff_energy_ratio: beyond_cutoff_energy_ratio(recon, model),
    })
}

/// Fraction of `Σ|F|²` at radial frequencies above the model's cutoff.
pub fn beyond_cutoff_energy_ratio(img: &ImageGrid, model: &OpticalModel) -> f64 {
    let spec = fft_forward(img);
    let (w, h) = (img.width(), img.height());
    let fx_step = 1000.0 / (w as f64 * img.pixel_pitch());
    let fy_step = 1000.0 / (h as f64 * img.pixel_pitch());
    let signed = |i: usize, n: usize| -> f64 {
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    let mut beyond = 0.0;
    let mut total = 0.0;
    for y in 0..h {
        let fy = signed(y, h) * fy_step;
        for x in 0..w {
            let fx = signed(x, w) * fx_step;
            let e = spec.samples()[y * w + x].norm_sqr();
            total += e;
            if fx.hypot(fy) > model.cutoff_frequency {
                beyond += e;
            }
        }
    }
    if total > 0.0 {
        beyond / total
    } else {
        0.0
    }
}

/// Normalized correlation between a recovered pattern canvas and the
/// ground-truth speckle, evaluated per visited window and averaged.
///
/// Each frame's recovered window (placed by the estimated shift) is compared
/// against the true window (placed by the true shift) in the same
/// object-plane coordinates, so the score is insensitive to the global
/// canvas offset between the two shift sets. Pearson correlation makes it
/// insensitive to the recovery's scale/offset ambiguity as well.
pub fn pattern_window_correlation(
    recovered_master: &ImageGrid,
    estimated_shifts: &[ShiftVector],
    truth_master: &ImageGrid,
    true_shifts: &[ShiftVector],
    frame_width: usize,
    frame_height: usize,
) -> Result<f64> {
    if estimated_shifts.len() != true_shifts.len() {
        return Err(Error::CountMismatch {
            what: "true shifts",
            expected: estimated_shifts.len(),
            actual: true_shifts.len(),
        });
    }
    let est_anchor = canvas_anchor(
        frame_width,
        frame_height,
        recovered_master.width(),
        recovered_master.height(),
        estimated_shifts,
    )?;
    let true_anchor = canvas_anchor(
        frame_width,
        frame_height,
        truth_master.width(),
        truth_master.height(),
        true_shifts,
    )?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (n, (&est, &truth)) in estimated_shifts.iter().zip(true_shifts).enumerate() {
        let run = || -> Result<f64> {
            let rec = window_crop(
                recovered_master,
                window_offset(est_anchor, est),
                frame_width,
                frame_height,
            )?;
            let tru = window_crop(
                truth_master,
                window_offset(true_anchor, truth),
                frame_width,
                frame_height,
            )?;
            Ok(pearson(rec.samples(), tru.samples()))
        };
        let r = run().map_err(|e| e.in_frame(n))?;
        if r.is_finite() {
            sum += r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::degenerate(
            "no window pair had finite correlation (constant windows)",
        ));
    }
    Ok(sum / count as f64)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Everything needed to rerun the simulate → extract pipeline at different
/// noise levels.
#[derive(Debug, Clone)]
pub struct SweepScenario {
    pub object: ImageGrid,
    pub optical: OpticalConfig,
    pub shifts: Vec<ShiftVector>,
    pub speckle_seed: u64,
    pub speckle_correlation_length: f64,
    pub reference_index: usize,
    pub isolation_floor: f64,
    /// Per-trial noise seeds derive from this, the noise level's bits, and
    /// the trial index, so level order and scheduling cannot matter.
    pub base_seed: u64,
}

/// One row of the noise sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub variance_ratio: f64,
    pub mean_abs_x: f64,
    pub mean_abs_y: f64,
}

/// Mean position error per noise level, averaged over seeded trials.
pub fn noise_sweep(
    scenario: &SweepScenario,
    levels: &[f64],
    trials: usize,
) -> Result<Vec<SweepPoint>> {
    if levels.is_empty() {
        return Err(Error::EmptyInput("noise levels"));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    for &level in levels {
        if !level.is_finite() || level < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise level must be non-negative, got {level}"
            )));
        }
    }
    let model = build_otf(
        &scenario.optical,
        scenario.object.width(),
        scenario.object.height(),
    )?;
    let (cw, ch) = canvas_dims(
        scenario.object.width(),
        scenario.object.height(),
        &scenario.shifts,
    )?;
    let master = generate_speckle(
        scenario.speckle_seed,
        cw,
        ch,
        scenario.speckle_correlation_length,
    )?;

    let cells: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|li| (0..trials).map(move |t| (li, t)))
        .collect();
    let errors: Vec<(usize, f64, f64)> = cells
        .par_iter()
        .map(|&(li, trial)| -> Result<(usize, f64, f64)> {
            let level = levels[li];
            let seed = stream_seed2(scenario.base_seed, level.to_bits(), trial as u64);
            let run = || -> Result<(f64, f64)> {
                let set = simulate_acquisition(
                    &scenario.object,
                    &master,
                    &scenario.shifts,
                    &model,
                    level,
                    seed,
                )?;
                let extraction = extract_positions(
                    &set.frames,
                    scenario.reference_index,
                    scenario.isolation_floor,
                )?;
                let report = position_errors(
                    &extraction.shifts,
                    &scenario.shifts,
                    scenario.reference_index,
                )?;
                Ok((report.mean_abs_x, report.mean_abs_y))
            };
            let (x, y) = run().map_err(|e| {
                Error::InvalidParameter(format!("noise level {level}, trial {trial}: {e}"))
            })?;
            Ok((li, x, y))
        })
        .collect::<Result<_>>()?;

    let mut points: Vec<SweepPoint> = levels
        .iter()
        .map(|&variance_ratio| SweepPoint {
            variance_ratio,
            mean_abs_x: 0.0,
            mean_abs_y: 0.0,
        })
        .collect();
    for (li, x, y) in errors {
        points[li].mean_abs_x += x / trials as f64;
        points[li].mean_abs_y += y / trials as f64;
    }
    Ok(points)
}
