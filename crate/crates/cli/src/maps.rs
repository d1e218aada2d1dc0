//! Activation and coefficient map rendering.
//!
//! Maps are written as binary PPM (P6) plus PNG. The binary palette paints
//! active voxels white on black; the diverging palette is blue-white-red
//! with a range symmetric about zero.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    Binary,
    Diverging,
}

fn colorize(values: &[f64], palette: Palette) -> Vec<u8> {
    match palette {
        Palette::Binary => values
            .iter()
            .flat_map(|&v| if v > 0.5 { [255, 255, 255] } else { [0, 0, 0] })
            .collect(),
        Palette::Diverging => {
            let limit = values
                .iter()
                .map(|v| v.abs())
                .fold(0.0f64, f64::max)
                .max(f64::MIN_POSITIVE);
            values
                .iter()
                .flat_map(|&v| {
                    let s = (v / limit).clamp(-1.0, 1.0);
                    let fade = |c: f64| (255.0 * (1.0 - c)).round() as u8;
                    if s >= 0.0 {
                        // white → red
                        [255, fade(s), fade(s)]
                    } else {
                        // white → blue
                        [fade(-s), fade(-s), 255]
                    }
                })
                .collect()
        }
    }
}

/// Write `values` as a (dims[0] rows) × (remaining axes) image, PPM and PNG.
pub fn emit_map_image(values: &[f64], dims: &[usize], palette: Palette, stem: &Path) -> Result<()> {
    let n: usize = dims.iter().product();
    if values.len() != n || dims.is_empty() {
        bail!(
            "map has {} values but dims {:?} require {}",
            values.len(),
            dims,
            n
        );
    }
    let height = dims[0];
    let width = n / height;
    let pixels = colorize(values, palette);

    let ppm_path = stem.with_extension("ppm");
    let mut ppm = format!("P6\n{} {}\n255\n", width, height).into_bytes();
    ppm.extend_from_slice(&pixels);
    fs::write(&ppm_path, ppm).with_context(|| format!("writing {}", ppm_path.display()))?;

    let png_path = stem.with_extension("png");
    let img = image::RgbImage::from_raw(width as u32, height as u32, pixels)
        .expect("pixel buffer matches dimensions");
    img.save(&png_path)
        .with_context(|| format!("writing {}", png_path.display()))?;
    Ok(())
}

/// Parse a P6 PPM back into per-pixel RGB triples (for round-trip tests).
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| anyhow::anyhow!("truncated PPM header"))?;
    let header = std::str::from_utf8(&bytes[..header_end])?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("P6") {
        bail!("not a P6 PPM");
    }
    let width: usize = parts.next().unwrap_or("0").parse()?;
    let height: usize = parts.next().unwrap_or("0").parse()?;
    let maxval: usize = parts.next().unwrap_or("0").parse()?;
    if maxval != 255 {
        bail!("unsupported maxval {}", maxval);
    }
    let pixels = bytes[header_end + 1..].to_vec();
    if pixels.len() != width * height * 3 {
        bail!("PPM payload size mismatch");
    }
    Ok((width, height, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn binary_checkerboard_round_trips_through_ppm() {
        let dir = tempdir().unwrap();
        let stem = dir.path().join("board");
        let values: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        emit_map_image(&values, &[4, 4], Palette::Binary, &stem).unwrap();
        let (w, h, pixels) = read_ppm(&stem.with_extension("ppm")).unwrap();
        assert_eq!((w, h), (4, 4));
        for (i, v) in values.iter().enumerate() {
            let expected = if *v > 0.5 { 255 } else { 0 };
            assert_eq!(pixels[3 * i], expected);
            assert_eq!(pixels[3 * i + 1], expected);
            assert_eq!(pixels[3 * i + 2], expected);
        }
        assert!(stem.with_extension("png").exists());
    }

    #[test]
    fn diverging_palette_is_sign_symmetric() {
        let pos = colorize(&[1.0, 0.5, 0.0], Palette::Diverging);
        let neg = colorize(&[-1.0, -0.5, 0.0], Palette::Diverging);
        // positive maxes out red, negative mirrors into blue
        assert_eq!(&pos[0..3], &[255, 0, 0]);
        assert_eq!(&neg[0..3], &[0, 0, 255]);
        assert_eq!(&pos[3..6], &[255, 128, 128]);
        assert_eq!(&neg[3..6], &[128, 128, 255]);
        // zero is white under both signs
        assert_eq!(&pos[6..9], &[255, 255, 255]);
        assert_eq!(&neg[6..9], &[255, 255, 255]);
    }

    #[test]
    fn emit_rejects_mismatched_dims() {
        let dir = tempdir().unwrap();
        let stem = dir.path().join("bad");
        assert!(emit_map_image(&[0.0; 5], &[2, 3], Palette::Binary, &stem).is_err());
    }
}
