//! Binary PGM output for RBM samples and receptive fields.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use log::warn;
use lowres_core::numerics::Matrix;

/// Brightness of the one-pixel lines between tiles.
const SEPARATOR: f64 = 1.0;

/// Writes `image` (values in `[0, 1]`, row-major) as an 8-bit binary PGM.
/// Out-of-range values are clamped with a warning.
pub fn write_pgm(image: &Matrix, path: &Path) -> io::Result<()> {
    let (height, width) = image.shape();
    let mut clamped = 0usize;
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(height * width);
    for &v in image.as_slice() {
        if !(0.0..=1.0).contains(&v) {
            clamped += 1;
        }
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        bytes.push((v * 255.0).round() as u8);
    }
    if clamped > 0 {
        warn!("{}: clamped {clamped} pixel values outside [0, 1]", path.display());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)
}

/// Arranges equally shaped tiles in a grid `columns` wide, row by row,
/// separated by one-pixel lines. A single row or column has no outer border.
pub fn tile(tiles: &[Vec<f64>], (height, width): (usize, usize), columns: usize) -> Result<Matrix, String> {
    if tiles.is_empty() || columns == 0 {
        return Err("nothing to tile".into());
    }
    if let Some(t) = tiles.iter().find(|t| t.len() != height * width) {
        return Err(format!("tile of {} values does not match shape {height}x{width}", t.len()));
    }
    let columns = columns.min(tiles.len());
    let rows = tiles.len().div_ceil(columns);
    let out_h = rows * height + rows - 1;
    let out_w = columns * width + columns - 1;
    let mut out = Matrix::filled(out_h, out_w, SEPARATOR);
    for (i, t) in tiles.iter().enumerate() {
        let (top, left) = ((i / columns) * (height + 1), (i % columns) * (width + 1));
        for r in 0..height {
            out.row_mut(top + r)[left..left + width].copy_from_slice(&t[r * width..(r + 1) * width]);
        }
    }
    // Unused cells in a ragged last row stay at separator brightness.
    Ok(out)
}

/// Min-max normalizes each value to `[0, 1]`; a constant vector maps to 0.5.
fn normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; values.len()]
    }
}

/// Renders each column of `weights` (one hidden unit's incoming weights) as
/// an image of `shape`, normalized per column, in a near-square grid.
pub fn receptive_field_image(weights: &Matrix, shape: (usize, usize)) -> Result<Matrix, String> {
    if weights.rows() != shape.0 * shape.1 {
        return Err(format!(
            "weight columns have {} entries, image shape {}x{} needs {}",
            weights.rows(),
            shape.0,
            shape.1,
            shape.0 * shape.1
        ));
    }
    let tiles: Vec<Vec<f64>> = (0..weights.cols()).map(|c| normalize(&weights.column(c))).collect();
    let columns = (tiles.len() as f64).sqrt().ceil() as usize;
    tile(&tiles, shape, columns)
}

pub fn write_receptive_fields(weights: &Matrix, shape: (usize, usize), path: &Path) -> io::Result<()> {
    let image = receptive_field_image(weights, shape).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    write_pgm(&image, path)
}

/// Lays out sampling chains side by side: one column per initial condition,
/// one row per recording.
pub fn sample_grid(chains: &[Vec<Vec<f64>>], shape: (usize, usize)) -> Result<Matrix, String> {
    let recordings = chains.first().map_or(0, Vec::len);
    if recordings == 0 || chains.iter().any(|c| c.len() != recordings) {
        return Err("every chain needs the same, non-zero number of recordings".into());
    }
    let tiles: Vec<Vec<f64>> = (0..recordings)
        .flat_map(|r| chains.iter().map(move |c| c[r].clone()))
        .collect();
    tile(&tiles, shape, chains.len())
}
