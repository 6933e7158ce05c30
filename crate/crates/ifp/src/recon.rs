//! Iterative object/pattern reconstruction from speckle-scanned frames.
//!
//! Starting from the mean image and a flat pattern guess, each frame drives
//! one update cycle: form the target (object times shifted pattern window),
//! replace its in-band spectrum with the measurement's, then renew the object
//! and the pattern window from the spatial-domain residual. The pattern lives
//! on a padded master canvas and every translation is a window selection, so
//! nothing ever wraps around. Frequencies beyond the OTF cutoff build up in
//! the object estimate through the object-speckle frequency mixing.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{
    fft_forward, fft_inverse, window_accumulate, window_crop, ImageGrid, ShiftVector, Spectrum,
};
use crate::optics::{canvas_anchor, canvas_dims, window_offset, OpticalModel};
use crate::tpe::mean_image;

/// Order in which frames are visited within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOrder {
    /// Acquisition order, every iteration.
    Sequential,
    /// A fresh seeded shuffle per iteration.
    SeededRandom { seed: u64 },
}

/// Knobs for [`run_ifp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconOptions {
    pub max_iterations: usize,
    /// Relative L2 change of the object between iterations below which the
    /// loop stops early.
    pub convergence_tolerance: f64,
    pub frame_order: FrameOrder,
    /// Clamp object and pattern to be non-negative after each update.
    pub clamp_nonnegative: bool,
}

impl Default for ReconOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tolerance: 1e-4,
            frame_order: FrameOrder::Sequential,
            clamp_nonnegative: true,
        }
    }
}

impl ReconOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.convergence_tolerance.is_nan() || self.convergence_tolerance < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "convergence_tolerance must be non-negative, got {}",
                self.convergence_tolerance
            )));
        }
        Ok(())
    }
}

/// Current object and pattern estimates plus iteration bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconState {
    /// Object intensity estimate on the frame grid.
    pub object: ImageGrid,
    /// Illumination pattern estimate on the padded master canvas.
    pub pattern_master: ImageGrid,
    /// Canvas coordinate of the zero-shift window origin.
    pub canvas_anchor: ShiftVector,
    /// Completed full iterations.
    pub iteration: usize,
    /// Sum over frames of `sum((updated target - target)^2)`, one entry per
    /// completed iteration.
    pub residual_history: Vec<f64>,
    /// Canvas pixels covered by at least one shifted window. Pixels outside
    /// keep their initialization value and carry no information.
    coverage: Vec<bool>,
}

impl ReconState {
    /// Build a state around explicit object and pattern estimates.
    ///
    /// Validates that every shifted window fits the canvas and records which
    /// canvas pixels the shift set visits.
    pub fn new(
        object: ImageGrid,
        pattern_master: ImageGrid,
        canvas_anchor: ShiftVector,
        shifts: &[ShiftVector],
    ) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::EmptyInput("shifts"));
        }
        let (w, h) = (object.width(), object.height());
        let (cw, ch) = (pattern_master.width(), pattern_master.height());
        let mut coverage = vec![false; cw * ch];
        for (n, &shift) in shifts.iter().enumerate() {
            let off = window_offset(canvas_anchor, shift);
            if off.dx < 0 || off.dy < 0 {
                return Err(window_error(off, w, h, cw, ch).in_frame(n));
            }
            let (x0, y0) = (off.dx as usize, off.dy as usize);
            if x0 + w > cw || y0 + h > ch {
                return Err(window_error(off, w, h, cw, ch).in_frame(n));
            }
            for y in y0..y0 + h {
                coverage[y * cw + x0..y * cw + x0 + w].fill(true);
            }
        }
        Ok(Self {
            object,
            pattern_master,
            canvas_anchor,
            iteration: 0,
            residual_history: Vec::new(),
            coverage,
        })
    }

    /// Visited-canvas mask, row-major over the pattern master.
    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    /// Number of canvas pixels never covered by any window.
    pub fn unconstrained_pixels(&self) -> usize {
        self.coverage.iter().filter(|&&c| !c).count()
    }
}

fn window_error(off: ShiftVector, w: usize, h: usize, cw: usize, ch: usize) -> Error {
    Error::WindowOutOfRange {
        dx: off.dx as i64,
        dy: off.dy as i64,
        window_width: w,
        window_height: h,
        canvas_width: cw,
        canvas_height: ch,
    }
}

/// Initial state: object = mean of the frames, pattern = all-ones canvas
/// tightly sized to contain every shifted window.
pub fn init_state(frames: &[ImageGrid], shifts: &[ShiftVector]) -> Result<ReconState> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    if frames.len() != shifts.len() {
        return Err(Error::CountMismatch {
            what: "shifts",
            expected: frames.len(),
            actual: shifts.len(),
        });
    }
    let object = mean_image(frames)?;
    let (cw, ch) = canvas_dims(object.width(), object.height(), shifts)?;
    let pattern_master = ImageGrid::filled(cw, ch, object.pixel_pitch(), 1.0)?;
    let anchor = canvas_anchor(object.width(), object.height(), cw, ch, shifts)?;
    ReconState::new(object, pattern_master, anchor, shifts)
}

/// Target image for one frame: object times its shifted pattern window.
pub fn target_image(state: &ReconState, shift: ShiftVector) -> Result<ImageGrid> {
    let window = window_crop(
        &state.pattern_master,
        window_offset(state.canvas_anchor, shift),
        state.object.width(),
        state.object.height(),
    )?;
    state.object.zip_map(&window, |o, p| o * p)
}

/// Replace the target's in-band spectrum with the measurement's:
/// `F(out) = F(target) + OTF * (F(captured) - OTF * F(target))`.
pub fn fourier_update(
    target: &ImageGrid,
    captured: &ImageGrid,
    model: &OpticalModel,
) -> Result<ImageGrid> {
    target.check_same_dims(captured)?;
    fourier_update_spec(target, &fft_forward(captured), model)
}

/// [`fourier_update`] against a precomputed measurement spectrum; the run
/// loop transforms each frame once instead of once per iteration.
fn fourier_update_spec(
    target: &ImageGrid,
    captured: &Spectrum,
    model: &OpticalModel,
) -> Result<ImageGrid> {
    model.otf.check_same_dims(target)?;
    if captured.width() != target.width() || captured.height() != target.height() {
        return Err(Error::DimensionMismatch {
            expected_width: target.width(),
            expected_height: target.height(),
            width: captured.width(),
            height: captured.height(),
        });
    }
    let target_spec = fft_forward(target);
    let combined: Vec<Complex<f64>> = target_spec
        .samples()
        .iter()
        .zip(captured.samples())
        .zip(model.otf.samples())
        .map(|((&tm, &tn), &otf)| tm + otf * (tn - otf * tm))
        .collect();
    Ok(fft_inverse(&Spectrum::new(
        target.width(),
        target.height(),
        target.pixel_pitch(),
        combined,
    )?))
}

/// Renew the object from one frame's residual:
/// `object + window / max(window)^2 * (updated_target - target)`.
pub fn object_update(
    object: &ImageGrid,
    pattern_window: &ImageGrid,
    target: &ImageGrid,
    updated_target: &ImageGrid,
    clamp_nonnegative: bool,
) -> Result<ImageGrid> {
    object.check_same_dims(pattern_window)?;
    object.check_same_dims(target)?;
    object.check_same_dims(updated_target)?;
    let peak = pattern_window.max_value();
    if peak * peak == 0.0 {
        return Err(Error::degenerate(
            "pattern window is identically zero; object update undefined",
        ));
    }
    let scale = 1.0 / (peak * peak);
    let mut samples = Vec::with_capacity(object.samples().len());
    for i in 0..object.samples().len() {
        let residual = updated_target.samples()[i] - target.samples()[i];
        let v = object.samples()[i] + pattern_window.samples()[i] * scale * residual;
        samples.push(if clamp_nonnegative { v.max(0.0) } else { v });
    }
    ImageGrid::new(
        object.width(),
        object.height(),
        object.pixel_pitch(),
        samples,
    )
}

/// Renew one pattern window from the same residual:
/// `window + updated_object / max(updated_object)^2 * (updated_target - target)`.
pub fn pattern_update(
    pattern_window: &ImageGrid,
    updated_object: &ImageGrid,
    target: &ImageGrid,
    updated_target: &ImageGrid,
    clamp_nonnegative: bool,
) -> Result<ImageGrid> {
    pattern_window.check_same_dims(updated_object)?;
    pattern_window.check_same_dims(target)?;
    pattern_window.check_same_dims(updated_target)?;
    let peak = updated_object.max_value();
    if peak * peak == 0.0 {
        return Err(Error::degenerate(
            "updated object is identically zero; pattern update undefined",
        ));
    }
    let scale = 1.0 / (peak * peak);
    let mut samples = Vec::with_capacity(pattern_window.samples().len());
    for i in 0..pattern_window.samples().len() {
        let residual = updated_target.samples()[i] - target.samples()[i];
        let v = pattern_window.samples()[i] + updated_object.samples()[i] * scale * residual;
        samples.push(if clamp_nonnegative { v.max(0.0) } else { v });
    }
    ImageGrid::new(
        pattern_window.width(),
        pattern_window.height(),
        pattern_window.pixel_pitch(),
        samples,
    )
}

/// Full reconstruction: initialize from the frames and iterate to
/// convergence or the iteration cap.
pub fn run_ifp(
    frames: &[ImageGrid],
    shifts: &[ShiftVector],
    model: &OpticalModel,
    opts: &ReconOptions,
) -> Result<ReconState> {
    let mut state = init_state(frames, shifts)?;
    run_from(&mut state, frames, shifts, model, opts)?;
    Ok(state)
}

/// Iterate the update cycle from an existing state (warm start).
///
/// Within an iteration the updates are inherently sequential — each frame's
/// update feeds the next — so only the FFTs inside parallelize.
pub fn run_from(
    state: &mut ReconState,
    frames: &[ImageGrid],
    shifts: &[ShiftVector],
    model: &OpticalModel,
    opts: &ReconOptions,
) -> Result<()> {
    opts.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    if frames.len() != shifts.len() {
        return Err(Error::CountMismatch {
            what: "shifts",
            expected: frames.len(),
            actual: shifts.len(),
        });
    }
    for frame in frames {
        state.object.check_same_dims(frame)?;
    }
    model.otf.check_same_dims(&state.object)?;

    // Measurement spectra never change; transform each frame exactly once.
    let captured_specs: Vec<Spectrum> = frames.iter().map(fft_forward).collect();

    let mut order: Vec<usize> = (0..frames.len()).collect();
    for _ in 0..opts.max_iterations {
        let iteration = state.iteration;
        if let FrameOrder::SeededRandom { seed } = opts.frame_order {
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::seeding::stream_seed(seed, iteration as u64));
            order.shuffle(&mut rng);
        }

        let previous_object = state.object.clone();
        let mut residual = 0.0;
        for &idx in &order {
            step_frame(
                state,
                &captured_specs[idx],
                shifts[idx],
                model,
                opts,
                &mut residual,
            )
            .map_err(|e| e.in_recon(iteration, idx))?;
        }
        state.iteration += 1;
        state.residual_history.push(residual);

        let change = l2_diff(&state.object, &previous_object);
        let base = l2_norm(&previous_object);
        if base > 0.0 && change / base < opts.convergence_tolerance {
            break;
        }
    }
    Ok(())
}

fn step_frame(
    state: &mut ReconState,
    captured: &Spectrum,
    shift: ShiftVector,
    model: &OpticalModel,
    opts: &ReconOptions,
    residual: &mut f64,
) -> Result<()> {
    let offset = window_offset(state.canvas_anchor, shift);
    let (w, h) = (state.object.width(), state.object.height());
    let window = window_crop(&state.pattern_master, offset, w, h)?;
    let target = state.object.zip_map(&window, |o, p| o * p)?;
    let updated_target = fourier_update_spec(&target, captured, model)?;
    *residual += updated_target
        .samples()
        .iter()
        .zip(target.samples())
        .map(|(&u, &t)| (u - t) * (u - t))
        .sum::<f64>();

    let updated_object = object_update(
        &state.object,
        &window,
        &target,
        &updated_target,
        opts.clamp_nonnegative,
    )?;
    let updated_window = pattern_update(
        &window,
        &updated_object,
        &target,
        &updated_target,
        opts.clamp_nonnegative,
    )?;
    let delta = updated_window.zip_map(&window, |new, old| new - old)?;
    state.pattern_master = window_accumulate(&state.pattern_master, offset, &delta)?;
    state.object = updated_object;
    Ok(())
}

fn l2_norm(img: &ImageGrid) -> f64 {
    img.samples().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_diff(a: &ImageGrid, b: &ImageGrid) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Relative L2 distance between two states' estimates, for fixed-point and
/// invariance checks.
pub fn relative_change(before: &ImageGrid, after: &ImageGrid) -> f64 {
    let base = l2_norm(before);
    if base == 0.0 {
        l2_norm(after)
    } else {
        l2_diff(after, before) / base
    }
}
