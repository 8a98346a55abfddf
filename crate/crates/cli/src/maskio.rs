//! Mask file format: packed bitmaps plus seed metadata.
//!
//! Layout (all integers little-endian):
//!   magic  4 bytes  "USMK"
//!   u32    version (1)
//!   u8     kind: 0 = focused channels, 1 = plane-wave angles
//!   u32    n_planes
//!   u32    n_channels (row length)
//!   u32    n_keep
//!   u64    rng_seed
//!   bits   per plane, ceil(n_channels / 8) bytes, LSB-first within a byte

use std::path::Path;

use anyhow::{Context, Result};
use usbf_core::{MaskKind, SamplingMask};

const MAGIC: &[u8; 4] = b"USMK";
const VERSION: u32 = 1;

pub fn write_mask(mask: &SamplingMask, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match mask.kind {
        MaskKind::FocusedChannels => 0u8,
        MaskKind::PwAngles => 1u8,
    });
    let n_planes = mask.n_planes() as u32;
    let n_ch = mask.row_len() as u32;
    out.extend_from_slice(&n_planes.to_le_bytes());
    out.extend_from_slice(&n_ch.to_le_bytes());
    out.extend_from_slice(&(mask.n_keep as u32).to_le_bytes());
    out.extend_from_slice(&mask.rng_seed.to_le_bytes());
    let row_bytes = (mask.row_len() + 7) / 8;
    for p in 0..mask.n_planes() {
        let mut packed = vec![0u8; row_bytes];
        for (ch, &active) in mask.plane(p).iter().enumerate() {
            if active {
                packed[ch / 8] |= 1 << (ch % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    std::fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < 29 || &bytes[0..4] != MAGIC {
        anyhow::bail!("{}: not a mask file", path.display());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        anyhow::bail!("{}: unsupported mask version {version}", path.display());
    }
    let kind = match bytes[8] {
        0 => MaskKind::FocusedChannels,
        1 => MaskKind::PwAngles,
        k => anyhow::bail!("{}: unknown mask kind {k}", path.display()),
    };
    let n_planes = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let n_ch = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    let n_keep = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(bytes[21..29].try_into().unwrap());
    let row_bytes = (n_ch + 7) / 8;
    let expected = 29 + n_planes * row_bytes;
    if bytes.len() != expected {
        anyhow::bail!(
            "{}: {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        );
    }
    let mut planes = Vec::with_capacity(n_planes);
    for p in 0..n_planes {
        let row = &bytes[29 + p * row_bytes..29 + (p + 1) * row_bytes];
        planes.push((0..n_ch).map(|ch| row[ch / 8] >> (ch % 8) & 1 == 1).collect());
    }
    Ok(SamplingMask::from_rows(kind, planes, n_keep, seed)?)
}
