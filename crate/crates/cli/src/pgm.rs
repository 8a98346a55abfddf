//! B-mode image output: binary PGM (P5) with the linear dB-to-gray map
//! `[-dynamic_range, 0] -> [0, 255]`, plus optional PNG for viewing.

use std::path::Path;

use anyhow::{Context, Result};
use usbf_core::BModeImage;

pub fn to_gray_bytes(image: &BModeImage) -> Vec<u8> {
    let dr = image.dynamic_range_db;
    image
        .pixels()
        .iter()
        .map(|&p| (((p + dr) / dr * 255.0).round().clamp(0.0, 255.0)) as u8)
        .collect()
}

pub fn write_pgm(image: &BModeImage, path: &Path) -> Result<()> {
    let header = format!("P5\n{} {}\n255\n", image.n_lateral(), image.n_depth());
    let mut out = header.into_bytes();
    out.extend_from_slice(&to_gray_bytes(image));
    std::fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_png(image: &BModeImage, path: &Path) -> Result<()> {
    let gray = to_gray_bytes(image);
    let img = image::GrayImage::from_vec(image.n_lateral() as u32, image.n_depth() as u32, gray)
        .expect("buffer length matches dimensions");
    img.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Parses a P5 PGM produced by [`write_pgm`] back into gray bytes
/// (width, height, pixels). Used by tests.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .context("truncated PGM header")?;
    let header = std::str::from_utf8(&bytes[..header_end])?;
    let mut lines = header.lines();
    anyhow::ensure!(lines.next() == Some("P5"), "not a P5 PGM");
    let dims: Vec<usize> = lines
        .next()
        .context("missing dims")?
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    anyhow::ensure!(lines.next() == Some("255"), "unexpected maxval");
    let (w, h) = (dims[0], dims[1]);
    let px = bytes[header_end + 1..].to_vec();
    anyhow::ensure!(px.len() == w * h, "pixel payload length mismatch");
    Ok((w, h, px))
}
