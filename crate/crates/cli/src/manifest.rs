//! Dataset manifest: JSON index of the RF blobs a `simulate` run produced,
//! with the probe snapshot, phantom provenance, and split tags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ProbeSection, PulseSection};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CystEntry {
    pub x_m: f64,
    pub z_m: f64,
    pub radius_m: f64,
    pub interior_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameEntry {
    pub id: usize,
    pub file: String,
    pub split: Split,
    pub bytes: u64,
    pub phantom_seed: u64,
    pub cysts: Vec<CystEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// "focused" or "planewave".
    pub mode: String,
    pub probe: ProbeSection,
    pub pulse: PulseSection,
    pub n_depth: usize,
    pub depth_start_m: f64,
    pub seed: u64,
    /// Steering angles, present for plane-wave datasets.
    pub angles_rad: Vec<f64>,
    pub frames: Vec<FrameEntry>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        manifest.validate(dir)?;
        Ok(manifest)
    }

    /// Every referenced blob must exist with the declared byte length.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            anyhow::bail!(
                "manifest format version {} unsupported (expected {MANIFEST_VERSION})",
                self.format_version
            );
        }
        for frame in &self.frames {
            let path = dir.join(&frame.file);
            let meta = std::fs::metadata(&path)
                .with_context(|| format!("missing frame blob {}", path.display()))?;
            if meta.len() != frame.bytes {
                anyhow::bail!(
                    "frame {} has {} bytes on disk, manifest says {}",
                    frame.file,
                    meta.len(),
                    frame.bytes
                );
            }
        }
        Ok(())
    }

    pub fn frames_in(&self, split: Split) -> Vec<&FrameEntry> {
        self.frames.iter().filter(|f| f.split == split).collect()
    }

    pub fn rx_per_event(&self) -> usize {
        if self.mode == "focused" {
            self.probe.n_rx_focused
        } else {
            self.probe.n_rx_planewave
        }
    }

    pub fn events_per_frame(&self) -> usize {
        if self.mode == "focused" {
            self.probe.n_te_focused
        } else {
            self.angles_rad.len()
        }
    }
}
