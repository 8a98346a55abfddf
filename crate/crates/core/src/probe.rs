//! Transducer geometry and acquisition constants, plus the axis/unit
//! conversions shared by the simulator and the beamformers.

use crate::error::{CoreError, Result};

/// Linear-array probe and acquisition configuration.
///
/// The defaults describe a 192-element linear probe running focused imaging
/// with 96 transmit events over a 64-element receive aperture, and plane-wave
/// imaging with 31 steered transmissions over all 192 elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
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

impl Default for ProbeConfig {
    fn default() -> Self {
        default_probe()
    }
}

/// Stock configuration of the reference probe.
pub fn default_probe() -> ProbeConfig {
    ProbeConfig {
        carrier_freq_hz: 8.48e6,
        sampling_freq_hz: 40e6,
        n_elements: 192,
        n_tx_elements: 128,
        n_te_focused: 96,
        n_rx_focused: 64,
        n_rx_planewave: 192,
        n_planewaves: 31,
        pitch_m: 0.2e-3,
        element_width_m: 0.14e-3,
        sound_speed_m_s: 1540.0,
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("sampling_freq_hz", self.sampling_freq_hz),
            ("pitch_m", self.pitch_m),
            ("element_width_m", self.element_width_m),
            ("sound_speed_m_s", self.sound_speed_m_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.n_rx_focused > self.n_tx_elements || self.n_tx_elements > self.n_elements {
            return Err(CoreError::InvalidConfig(format!(
                "need n_rx_focused <= n_tx_elements <= n_elements, got {} / {} / {}",
                self.n_rx_focused, self.n_tx_elements, self.n_elements
            )));
        }
        if self.sampling_freq_hz < 2.0 * self.carrier_freq_hz {
            return Err(CoreError::InvalidConfig(format!(
                "sampling_freq_hz {} below Nyquist for carrier {}",
                self.sampling_freq_hz, self.carrier_freq_hz
            )));
        }
        Ok(())
    }

    /// Axial sample spacing for pulse-echo acquisition: c / (2 fs).
    pub fn depth_step_m(&self) -> f64 {
        self.sound_speed_m_s / (2.0 * self.sampling_freq_hz)
    }

    /// Lateral position of element `r`, array centered on x = 0.
    pub fn element_x(&self, r: usize) -> f64 {
        (r as f64 - (self.n_elements as f64 - 1.0) / 2.0) * self.pitch_m
    }

    /// Lateral position of the focused scan line for transmit event `te`.
    ///
    /// Scan lines are uniformly spaced at `n_elements / n_te_focused` pitches
    /// and symmetric about the array center, so with the stock 192/96 layout
    /// each line falls midway between two adjacent elements.
    pub fn scan_line_x(&self, te: usize) -> f64 {
        let spacing = self.pitch_m * self.n_elements as f64 / self.n_te_focused as f64;
        (te as f64 - (self.n_te_focused as f64 - 1.0) / 2.0) * spacing
    }

    /// First element of the receive aperture for transmit event `te`.
    ///
    /// The aperture holds `n_rx_focused` contiguous elements centered on the
    /// scan line, clamped so it stays on the array near the edges.
    pub fn focused_aperture_start(&self, te: usize) -> usize {
        self.aperture_start_for_x(self.scan_line_x(te))
    }

    /// Aperture start for an arbitrary scan-line lateral position.
    pub fn aperture_start_for_x(&self, line_x_m: f64) -> usize {
        let n_ap = self.n_rx_focused as f64;
        let ideal =
            line_x_m / self.pitch_m + (self.n_elements as f64 - 1.0) / 2.0 - (n_ap - 1.0) / 2.0;
        let max_start = self.n_elements - self.n_rx_focused;
        (ideal.round().max(0.0) as usize).min(max_start)
    }
}

/// Depth in meters of pulse-echo sample `i`, counted from `depth_start_m`.
pub fn depth_index_to_meters(i: usize, depth_start_m: f64, probe: &ProbeConfig) -> f64 {
    depth_start_m + i as f64 * probe.depth_step_m()
}

/// Nearest pulse-echo sample index for a depth in meters.
pub fn meters_to_depth_index(z_m: f64, depth_start_m: f64, probe: &ProbeConfig) -> i64 {
    ((z_m - depth_start_m) / probe.depth_step_m()).round() as i64
}

/// Ratio of the full channel (or angle) count to the active count.
pub fn subsampling_factor(n_active: usize, n_full: usize) -> f64 {
    assert!(
        n_active >= 1 && n_active <= n_full,
        "need 1 <= n_active <= n_full, got {n_active}/{n_full}"
    );
    n_full as f64 / n_active as f64
}

/// Conventional label for a subsampling factor: one decimal, trailing ".0"
/// dropped ("1", "2.7", "16").
pub fn factor_label(factor: f64) -> String {
    let rounded = (factor * 10.0).round() / 10.0;
    if (rounded - rounded.round()).abs() < 1e-9 {
        format!("{}", rounded.round() as i64)
    } else {
        format!("{rounded:.1}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_probe_matches_reference_configuration() {
        let p = default_probe();
        assert_eq!(p.carrier_freq_hz, 8.48e6);
        assert_eq!(p.sampling_freq_hz, 40e6);
        assert_eq!(p.n_elements, 192);
        assert_eq!(p.n_tx_elements, 128);
        assert_eq!(p.n_te_focused, 96);
        assert_eq!(p.n_rx_focused, 64);
        assert_eq!(p.n_rx_planewave, 192);
        assert_eq!(p.n_planewaves, 31);
        assert_eq!(p.pitch_m, 0.2e-3);
        assert_eq!(p.element_width_m, 0.14e-3);
        assert_eq!(p.sound_speed_m_s, 1540.0);
        p.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut p = default_probe();
        p.sound_speed_m_s = -1.0;
        assert!(p.validate().is_err());

        let mut p = default_probe();
        p.n_rx_focused = 200;
        assert!(p.validate().is_err());

        let mut p = default_probe();
        p.sampling_freq_hz = 10e6; // below 2 x 8.48 MHz
        assert!(p.validate().is_err());
    }

    #[test]
    fn depth_conversions() {
        let p = default_probe();
        assert_eq!(depth_index_to_meters(0, 0.0, &p), 0.0);
        // 1540 / (2 * 40e6) = 1.925e-5
        let z1 = depth_index_to_meters(1, 0.0, &p);
        assert!((z1 - 1.925e-5).abs() < 1e-18);
        for i in [0usize, 1, 17, 500, 1023] {
            let z = depth_index_to_meters(i, 3e-3, &p);
            assert_eq!(meters_to_depth_index(z, 3e-3, &p), i as i64);
        }
    }

    #[test]
    fn subsampling_factor_examples() {
        assert_eq!(subsampling_factor(64, 64), 1.0);
        assert_eq!(factor_label(subsampling_factor(24, 64)), "2.7");
        assert_eq!(subsampling_factor(4, 64), 16.0);
        assert_eq!(factor_label(1.0), "1");
        assert_eq!(factor_label(16.0), "16");
    }

    #[test]
    fn subsampling_factor_strictly_decreasing_in_active_count() {
        let mut prev = f64::INFINITY;
        for n_active in 1..=64 {
            let f = subsampling_factor(n_active, 64);
            assert!(f < prev, "factor not decreasing at n_active={n_active}");
            prev = f;
        }
    }

    #[test]
    fn scan_lines_sit_between_center_aperture_elements() {
        let p = default_probe();
        // Away from the edges the scan line must fall exactly midway between
        // aperture channels 31 and 32.
        for te in 20..76 {
            let start = p.focused_aperture_start(te);
            let x = p.scan_line_x(te);
            let lo = p.element_x(start + 31);
            let hi = p.element_x(start + 32);
            assert!((x - (lo + hi) / 2.0).abs() < 1e-12, "te={te}");
        }
        // Edge apertures are clamped onto the array.
        assert_eq!(p.focused_aperture_start(0), 0);
        assert_eq!(p.focused_aperture_start(95), 192 - 64);
    }
}
