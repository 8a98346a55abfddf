//! Experiment configuration: one TOML file whose defaults reproduce the
//! stock acquisition setup, so a bare `[sim]` section is a valid experiment.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use usbf_core::ProbeConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub carrier_freq_hz: f64,
    pub sampling_freq_hz: f64,
    pub n_elements: usize,
    pub n_tx_elements: usize,
    pub n_te_focused: usize,
    pub n_rx_focused: usize,
    pub n_rx_planewave: usize,
    pub n_planewaves: usize,
    pub pitch_m: f64,
    pub element_width_m: f64,
    pub sound_speed_m_s: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self::from(&usbf_core::default_probe())
    }
}

impl From<&ProbeConfig> for ProbeSection {
    fn from(p: &ProbeConfig) -> Self {
        Self {
            carrier_freq_hz: p.carrier_freq_hz,
            sampling_freq_hz: p.sampling_freq_hz,
            n_elements: p.n_elements,
            n_tx_elements: p.n_tx_elements,
            n_te_focused: p.n_te_focused,
            n_rx_focused: p.n_rx_focused,
            n_rx_planewave: p.n_rx_planewave,
            n_planewaves: p.n_planewaves,
            pitch_m: p.pitch_m,
            element_width_m: p.element_width_m,
            sound_speed_m_s: p.sound_speed_m_s,
        }
    }
}

impl ProbeSection {
    pub fn to_probe(&self) -> ProbeConfig {
        ProbeConfig {
            carrier_freq_hz: self.carrier_freq_hz,
            sampling_freq_hz: self.sampling_freq_hz,
            n_elements: self.n_elements,
            n_tx_elements: self.n_tx_elements,
            n_te_focused: self.n_te_focused,
            n_rx_focused: self.n_rx_focused,
            n_rx_planewave: self.n_rx_planewave,
            n_planewaves: self.n_planewaves,
            pitch_m: self.pitch_m,
            element_width_m: self.element_width_m,
            sound_speed_m_s: self.sound_speed_m_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// "focused" or "planewave".
    pub mode: String,
    pub n_frames: usize,
    pub n_depth: usize,
    pub depth_start_m: f64,
    pub seed: u64,
    /// Plane-wave steering span (half angle, degrees).
    pub max_angle_deg: f64,
    /// Additive white Gaussian noise, in dB SNR relative to the frame RMS.
    pub noise_snr_db: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            mode: "focused".into(),
            n_frames: 8,
            n_depth: 1024,
            depth_start_m: 4e-3,
            seed: 1,
            max_angle_deg: 15.0,
            noise_snr_db: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub fractional_bandwidth: f64,
    pub cutoff_sigmas: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            fractional_bandwidth: 0.6,
            cutoff_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub x_half_extent_m: f64,
    /// Scatterers extend past the imaged depth window by this margin.
    pub z_pad_m: f64,
    pub density_per_m2: f64,
    pub n_cysts: usize,
    pub cyst_radius_min_m: f64,
    pub cyst_radius_max_m: f64,
    /// Cyst centers are drawn with |x| below this bound.
    pub cyst_x_max_m: f64,
    /// Fraction of the depth window (from the top) where cyst centers start.
    pub cyst_z_lo_frac: f64,
    pub cyst_z_hi_frac: f64,
    pub cyst_interior_scale: f64,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            x_half_extent_m: 8e-3,
            z_pad_m: 1e-3,
            density_per_m2: 1.2e7,
            n_cysts: 1,
            cyst_radius_min_m: 1.2e-3,
            cyst_radius_max_m: 1.8e-3,
            cyst_x_max_m: 2e-3,
            cyst_z_lo_frac: 0.35,
            cyst_z_hi_frac: 0.65,
            cyst_interior_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub seed: u64,
    pub factors: Vec<f64>,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            seed: 7,
            factors: vec![1.0, 2.0, 2.7, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub width_base: usize,
    /// Depth planes sampled per (frame, factor draw) when building the
    /// training set.
    pub planes_per_frame: usize,
    /// Subsampling factors mixed into training; a single entry trains a
    /// per-factor model instead of the universal one.
    pub factors: Vec<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr_start: 1e-3,
            lr_end: 1e-5,
            weight_decay: 1e-4,
            epochs: 200,
            batch_size: 32,
            seed: 3,
            width_base: 32,
            planes_per_frame: 16,
            factors: vec![1.0, 2.0, 2.7, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub dynamic_range_db: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            dynamic_range_db: 60.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub probe: ProbeSection,
    pub sim: SimSection,
    pub pulse: PulseSection,
    pub phantom: PhantomSection,
    pub split: SplitSection,
    pub masks: MaskSection,
    pub train: TrainSection,
    pub render: RenderSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.probe.to_probe().validate()?;
        if self.sim.mode != "focused" && self.sim.mode != "planewave" {
            anyhow::bail!("sim.mode must be \"focused\" or \"planewave\", got {:?}", self.sim.mode);
        }
        if self.sim.n_frames == 0 || self.sim.n_depth < 2 {
            anyhow::bail!("sim.n_frames and sim.n_depth must be positive (n_depth >= 2)");
        }
        if !(self.split.train_frac >= 0.0
            && self.split.val_frac >= 0.0
            && self.split.train_frac + self.split.val_frac <= 1.0)
        {
            anyhow::bail!("split fractions must be nonnegative and sum to at most 1");
        }
        if self.phantom.cyst_radius_min_m > self.phantom.cyst_radius_max_m {
            anyhow::bail!("phantom.cyst_radius_min_m exceeds cyst_radius_max_m");
        }
        Ok(())
    }
}

/// Maps a focused-mode subsampling factor label onto the active channel
/// count of the 64-channel aperture.
pub fn focused_factor_to_keep(factor: f64) -> Result<usize> {
    let label = usbf_core::factor_label(factor);
    Ok(match label.as_str() {
        "1" => 64,
        "2" => 32,
        "2.7" => 24,
        "4" => 16,
        "8" => 8,
        "16" => 4,
        _ => anyhow::bail!(
            "unsupported focused subsampling factor {factor} (use 1, 2, 2.7, 4, 8, 16)"
        ),
    })
}

/// Channel-count mapping for plane-wave acquisition over 192 receive
/// elements.
pub fn planewave_factor_to_keep(factor: f64) -> Result<usize> {
    let label = usbf_core::factor_label(factor);
    Ok(match label.as_str() {
        "1" => 192,
        "3" => 64,
        "6" => 32,
        "12" => 16,
        "24" => 8,
        _ => anyhow::bail!(
            "unsupported plane-wave channel factor {factor} (use 1, 3, 6, 12, 24)"
        ),
    })
}
