//! Pipeline file formats.
//!
//! - IFPM raw matrices: 16-byte header (magic `IFPM`, version u16, reserved
//!   u16, rows u32, cols u32, all little-endian) followed by row-major f64
//!   little-endian samples. Lossless, bit-exact round trips.
//! - 16-bit binary PGM (P5, maxval 65535, big-endian samples per the Netpbm
//!   convention), min-max scaled: a zero-dependency viewable export.
//! - CSV tables for positions, noise sweeps, and quality reports.
//!
//! All writes are atomic (temp file in the target directory, then rename),
//! so concurrent invocations with distinct output directories never see a
//! half-written file.

use std::io::Write;
use std::path::Path;

use ifp::grid::{ImageGrid, ShiftVector};
use ifp::metrics::{QualityReport, SweepPoint};

use crate::{CliError, Result};

const MAGIC: &[u8; 4] = b"IFPM";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| {
        CliError::data(format!("cannot create temp file in {}: {e}", dir.display()))
    })?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::data(format!("cannot persist {}: {e}", path.display())))?;
    Ok(())
}

/// Serialize a grid to IFPM bytes.
pub fn encode_matrix_bytes(img: &ImageGrid) -> Result<Vec<u8>> {
    let rows = u32::try_from(img.height())
        .map_err(|_| CliError::data(format!("matrix height {} overflows u32", img.height())))?;
    let cols = u32::try_from(img.width())
        .map_err(|_| CliError::data(format!("matrix width {} overflows u32", img.width())))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + img.samples().len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&0u16.to_le_bytes());
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    for &v in img.samples() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

/// Write a grid as an IFPM matrix file.
pub fn encode_matrix(img: &ImageGrid, path: &Path) -> Result<()> {
    atomic_write(path, &encode_matrix_bytes(img)?)
}

/// Parse IFPM bytes into a grid. The format carries no pixel pitch; the
/// result uses 1 um until the caller re-stamps it from its configuration.
pub fn decode_matrix_bytes(bytes: &[u8], source: &str) -> Result<ImageGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(CliError::data(format!(
            "{source}: truncated header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CliError::data(format!(
            "{source}: bad magic {:02x?}, expected \"IFPM\"",
            &bytes[0..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CliError::data(format!(
            "{source}: unsupported version {version}"
        )));
    }
    let rows = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let cols = u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as usize;
    if rows == 0 || cols == 0 {
        return Err(CliError::data(format!(
            "{source}: zero dimension {rows}x{cols}"
        )));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| CliError::data(format!("{source}: dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(CliError::data(format!(
            "{source}: payload is {} bytes, expected {expected} for {rows}x{cols}",
            payload.len()
        )));
    }
    let samples: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageGrid::new(cols, rows, 1.0, samples).map_err(|e| CliError::data(format!("{source}: {e}")))
}

/// Read an IFPM matrix file.
pub fn decode_matrix(path: &Path) -> Result<ImageGrid> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    decode_matrix_bytes(&bytes, &path.display().to_string())
}

/// Write a min-max scaled 16-bit binary PGM (P5, maxval 65535).
pub fn write_pgm16(img: &ImageGrid, path: &Path) -> Result<()> {
    let (lo, hi) = (img.min_value(), img.max_value());
    let span = hi - lo;
    let mut bytes = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for &v in img.samples() {
        let scaled = if span > 0.0 {
            ((v - lo) / span * 65535.0).round() as u16
        } else {
            0
        };
        bytes.extend_from_slice(&scaled.to_be_bytes());
    }
    atomic_write(path, &bytes)
}

/// Write per-frame shifts (`frame,dx_px,dy_px,confidence`). Ground-truth
/// tables use confidence 1.
pub fn write_positions_csv(
    path: &Path,
    shifts: &[ShiftVector],
    confidence: Option<&[f64]>,
) -> Result<()> {
    if let Some(conf) = confidence {
        if conf.len() != shifts.len() {
            return Err(CliError::data(format!(
                "confidence column has {} entries for {} shifts",
                conf.len(),
                shifts.len()
            )));
        }
    }
    let mut text = String::from("frame,dx_px,dy_px,confidence\n");
    for (n, s) in shifts.iter().enumerate() {
        let c = confidence.map_or(1.0, |conf| conf[n]);
        text.push_str(&format!("{n},{},{},{c}\n", s.dx, s.dy));
    }
    atomic_write(path, text.as_bytes())
}

/// Read a positions CSV back; shifts must be integers. Malformed rows are
/// reported by their 1-based file line (the header is line 1).
pub fn read_positions_csv(path: &Path) -> Result<(Vec<ShiftVector>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "frame,dx_px,dy_px,confidence" => {}
        Some((_, header)) => {
            return Err(CliError::data(format!(
                "{}: unexpected header {header:?}",
                path.display()
            )))
        }
        None => return Err(CliError::data(format!("{}: empty file", path.display()))),
    }
    let mut shifts = Vec::new();
    let mut confidence = Vec::new();
    for (line_no, line) in lines {
        let row = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::data(format!(
                "{} row {row}: expected 4 fields, got {}",
                path.display(),
                fields.len()
            )));
        }
        let frame: usize = fields[0].trim().parse().map_err(|_| {
            CliError::data(format!(
                "{} row {row}: bad frame index {:?}",
                path.display(),
                fields[0]
            ))
        })?;
        if frame != shifts.len() {
            return Err(CliError::data(format!(
                "{} row {row}: frame index {frame} out of order",
                path.display()
            )));
        }
        let parse_shift = |s: &str, what: &str| -> Result<i32> {
            s.trim().parse().map_err(|_| {
                CliError::data(format!(
                    "{} row {row}: {what} is not an integer pixel shift: {s:?}",
                    path.display()
                ))
            })
        };
        let dx = parse_shift(fields[1], "dx_px")?;
        let dy = parse_shift(fields[2], "dy_px")?;
        let c: f64 = fields[3].trim().parse().map_err(|_| {
            CliError::data(format!(
                "{} row {row}: bad confidence {:?}",
                path.display(),
                fields[3]
            ))
        })?;
        shifts.push(ShiftVector::new(dx, dy));
        confidence.push(c);
    }
    if shifts.is_empty() {
        return Err(CliError::data(format!(
            "{}: no position rows",
            path.display()
        )));
    }
    Ok((shifts, confidence))
}

/// Write a noise sweep table (`variance_ratio,mean_abs_x_px,mean_abs_y_px`).
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut text = String::from("variance_ratio,mean_abs_x_px,mean_abs_y_px\n");
    for p in points {
        text.push_str(&format!(
            "{},{},{}\n",
            p.variance_ratio, p.mean_abs_x, p.mean_abs_y
        ));
    }
    atomic_write(path, text.as_bytes())
}

/// Write labeled quality reports
/// (`image,rmse,psnr_db,beyond_cutoff_energy_ratio`).
pub fn write_quality_csv(path: &Path, rows: &[(String, QualityReport)]) -> Result<()> {
    let mut text = String::from("image,rmse,psnr_db,beyond_cutoff_energy_ratio\n");
    for (label, q) in rows {
        text.push_str(&format!(
            "{label},{},{},{}\n",
            q.rmse, q.psnr, q.beyond_cutoff_energy_ratio
        ));
    }
    atomic_write(path, text.as_bytes())
}
