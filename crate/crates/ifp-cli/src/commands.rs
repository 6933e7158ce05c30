//! Subcommand implementations, shared between the binary and the test
//! harness. Each takes a validated configuration plus filesystem locations
//! and writes its artifacts under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ifp::grid::{ImageGrid, ShiftVector};
use ifp::metrics::{image_quality, noise_sweep, SweepScenario};
use ifp::optics::{
    build_otf, canvas_dims, generate_scan_grid, generate_speckle, incoherent_image,
    resolution_target, simulate_acquisition, OpticalModel,
};
use ifp::recon::{run_ifp, ReconState};
use ifp::tpe::extract_positions_with;

use crate::config::PipelineConfig;
use crate::io::{
    atomic_write, decode_matrix, encode_matrix, read_positions_csv, write_pgm16,
    write_positions_csv, write_quality_csv, write_sweep_csv,
};
use crate::{CliError, Result};

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

/// Matrix plus PGM preview under the same stem.
fn write_matrix_pair(img: &ImageGrid, dir: &Path, stem: &str) -> Result<()> {
    encode_matrix(img, &dir.join(format!("{stem}.ifpm")))?;
    write_pgm16(img, &dir.join(format!("{stem}.pgm")))
}

/// The object: loaded from `paths.object` when set, otherwise the bundled
/// procedural resolution target at the configured size.
pub fn load_or_generate_object(config: &PipelineConfig) -> Result<ImageGrid> {
    let pitch = config.optical.pixel_pitch_um;
    match &config.paths.object {
        Some(path) => Ok(decode_matrix(path)?.with_pixel_pitch(pitch)?),
        None => Ok(resolution_target(
            config.object.width,
            config.object.height,
            pitch,
        )?),
    }
}

fn build_model(config: &PipelineConfig, object: &ImageGrid) -> Result<OpticalModel> {
    let optical = config.optical_config();
    if !optical.is_oversampled() {
        eprintln!(
            "warning: detector sampling {:.1} cycles/mm is below twice the incoherent cutoff \
             {:.1} cycles/mm; raw images will alias",
            optical.sampling_frequency(),
            optical.cutoff_frequency()
        );
    }
    Ok(build_otf(&optical, object.width(), object.height())?)
}

/// Simulate the acquisition and write object, speckle, diffraction-limited
/// reference, frames, and the ground-truth positions table.
pub fn cmd_simulate(config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let object = load_or_generate_object(config)?;
    let model = build_model(config, &object)?;
    let shifts = generate_scan_grid(config.scan.n_per_side, config.scan.step_px)?;
    let (cw, ch) = canvas_dims(object.width(), object.height(), &shifts)?;
    let master = generate_speckle(
        config.speckle.seed,
        cw,
        ch,
        config.speckle.correlation_length_px,
    )?
    .with_pixel_pitch(object.pixel_pitch())?;

    let set = simulate_acquisition(
        &object,
        &master,
        &shifts,
        &model,
        config.noise.variance_ratio,
        config.seed,
    )?;

    write_matrix_pair(&object, out_dir, "object")?;
    write_matrix_pair(&master, out_dir, "speckle_master")?;
    let diffraction_limited = incoherent_image(&object, &model)?;
    write_matrix_pair(&diffraction_limited, out_dir, "diffraction_limited")?;

    let frames_dir = out_dir.join("frames");
    ensure_dir(&frames_dir)?;
    for (n, frame) in set.frames.iter().enumerate() {
        encode_matrix(frame, &frames_dir.join(format!("frame_{n:04}.ifpm")))?;
    }
    write_pgm16(&set.frames[0], &out_dir.join("frame_0000.pgm"))?;
    write_positions_csv(&out_dir.join("truth_positions.csv"), &shifts, None)?;
    Ok(())
}

/// Read every `frame_*.ifpm` under a directory, sorted by name.
pub fn read_frames(frames_dir: &Path, pixel_pitch: f64) -> Result<Vec<ImageGrid>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(frames_dir)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", frames_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|ext| ext == "ifpm")
                && p.file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.starts_with("frame_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::data(format!(
            "no frame_*.ifpm files in {}",
            frames_dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| Ok(decode_matrix(p)?.with_pixel_pitch(pixel_pitch)?))
        .collect()
}

/// Run position extraction over a frame directory and write `positions.csv`.
pub fn cmd_extract(
    config: &PipelineConfig,
    frames_dir: &Path,
    out_dir: &Path,
    reference_override: Option<usize>,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let frames = read_frames(frames_dir, config.optical.pixel_pitch_um)?;
    let reference = reference_override.unwrap_or(config.tpe.reference_index);
    let result = extract_positions_with(&frames, reference, config.tpe.options())?;
    write_positions_csv(
        &out_dir.join("positions.csv"),
        &result.shifts,
        Some(&result.confidence),
    )
}

#[derive(Serialize)]
struct ReconMeta {
    iterations: usize,
    residual_history: Vec<f64>,
    canvas_width: usize,
    canvas_height: usize,
    canvas_anchor_dx: i32,
    canvas_anchor_dy: i32,
    /// Canvas pixels never visited by a window; they still hold the
    /// initialization value and carry no information.
    unconstrained_pixels: usize,
}

fn write_recon_outputs(state: &ReconState, out_dir: &Path) -> Result<()> {
    write_matrix_pair(&state.object, out_dir, "recon_object")?;
    write_matrix_pair(&state.pattern_master, out_dir, "recon_pattern")?;
    let meta = ReconMeta {
        iterations: state.iteration,
        residual_history: state.residual_history.clone(),
        canvas_width: state.pattern_master.width(),
        canvas_height: state.pattern_master.height(),
        canvas_anchor_dx: state.canvas_anchor.dx,
        canvas_anchor_dy: state.canvas_anchor.dy,
        unconstrained_pixels: state.unconstrained_pixels(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CliError::data(format!("cannot serialize recon metadata: {e}")))?;
    atomic_write(&out_dir.join("recon_meta.json"), json.as_bytes())
}

/// Reconstruct object and pattern from frames plus a positions table.
pub fn cmd_reconstruct(
    config: &PipelineConfig,
    frames_dir: &Path,
    positions: &Path,
    out_dir: &Path,
    no_clamp: bool,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let frames = read_frames(frames_dir, config.optical.pixel_pitch_um)?;
    let (shifts, _confidence) = read_positions_csv(positions)?;
    if shifts.len() != frames.len() {
        return Err(CliError::data(format!(
            "{} has {} rows for {} frames",
            positions.display(),
            shifts.len(),
            frames.len()
        )));
    }
    let model = build_model(config, &frames[0])?;
    let opts = config
        .recon
        .options(if no_clamp { Some(false) } else { None })?;
    let state = run_ifp(&frames, &shifts, &model, &opts)?;
    write_recon_outputs(&state, out_dir)
}

/// simulate → extract → reconstruct, sharing one output directory. Each
/// stage reads the previous stage's files, so the artifacts are identical
/// to running the subcommands separately.
pub fn cmd_pipeline(
    config: &PipelineConfig,
    out_dir: &Path,
    reference_override: Option<usize>,
    no_clamp: bool,
) -> Result<()> {
    cmd_simulate(config, out_dir)?;
    let frames_dir = out_dir.join("frames");
    cmd_extract(config, &frames_dir, out_dir, reference_override)?;
    cmd_reconstruct(
        config,
        &frames_dir,
        &out_dir.join("positions.csv"),
        out_dir,
        no_clamp,
    )
}

/// Run the noise sweep and write the error curve.
pub fn cmd_sweep_noise(config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let object = load_or_generate_object(config)?;
    let shifts = generate_scan_grid(config.scan.n_per_side, config.scan.step_px)?;
    let scenario = SweepScenario {
        object,
        optical: config.optical_config(),
        shifts,
        speckle_seed: config.speckle.seed,
        speckle_correlation_length: config.speckle.correlation_length_px,
        reference_index: config.tpe.reference_index,
        isolation_floor: config.tpe.floor,
        base_seed: config.seed,
    };
    let points = noise_sweep(&scenario, &config.sweep.levels, config.sweep.trials)?;
    write_sweep_csv(&out_dir.join("noise_sweep.csv"), &points)
}

/// Score a reconstruction against the ground-truth object and write
/// `quality.csv`, with the diffraction-limited image as the baseline row.
pub fn cmd_evaluate(
    config: &PipelineConfig,
    recon: &Path,
    truth: &Path,
    out_dir: &Path,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let pitch = config.optical.pixel_pitch_um;
    let recon_img = decode_matrix(recon)?.with_pixel_pitch(pitch)?;
    let truth_img = decode_matrix(truth)?.with_pixel_pitch(pitch)?;
    let model = build_model(config, &truth_img)?;
    let recon_quality = image_quality(&recon_img, &truth_img, &model)?;
    let diffraction_limited = incoherent_image(&truth_img, &model)?;
    let baseline_quality = image_quality(&diffraction_limited, &truth_img, &model)?;
    write_quality_csv(
        &out_dir.join("quality.csv"),
        &[
            ("reconstruction".to_string(), recon_quality),
            ("diffraction_limited".to_string(), baseline_quality),
        ],
    )
}

/// Ground-truth shifts for the configured scan, for tests and tooling.
pub fn configured_scan(config: &PipelineConfig) -> Result<Vec<ShiftVector>> {
    Ok(generate_scan_grid(
        config.scan.n_per_side,
        config.scan.step_px,
    )?)
}
