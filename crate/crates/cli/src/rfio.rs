//! RF blob format: little-endian 32-bit floats, C row-major
//! `[depth][rx][event]`; all dimensions live in the dataset manifest.

use std::path::Path;

use anyhow::{Context, Result};
use usbf_core::{EventKind, ProbeConfig, RFCube};

use crate::manifest::DatasetManifest;

pub fn write_cube(cube: &RFCube, path: &Path) -> Result<u64> {
    let mut bytes = Vec::with_capacity(cube.samples().len() * 4);
    for &v in cube.samples() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(bytes.len() as u64)
}

pub fn read_cube(path: &Path, manifest: &DatasetManifest, probe: &ProbeConfig) -> Result<RFCube> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let n_depth = manifest.n_depth;
    let n_rx = manifest.rx_per_event();
    let n_events = manifest.events_per_frame();
    let expected = n_depth * n_rx * n_events * 4;
    if bytes.len() != expected {
        anyhow::bail!(
            "{}: {} bytes, expected {expected} for {n_depth}x{n_rx}x{n_events} f32",
            path.display(),
            bytes.len()
        );
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let (kind, params) = if manifest.mode == "focused" {
        (
            EventKind::FocusedTe,
            (0..n_events).map(|te| probe.scan_line_x(te)).collect(),
        )
    } else {
        (EventKind::PlanewaveAngle, manifest.angles_rad.clone())
    };
    Ok(RFCube::from_parts(
        samples,
        n_depth,
        n_rx,
        n_events,
        manifest.depth_start_m,
        probe.depth_step_m(),
        kind,
        params,
    )?)
}
