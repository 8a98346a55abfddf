//! Raw per-channel RF data and the analytic-signal line type.

use crate::error::{CoreError, Result};
use crate::probe::ProbeConfig;

/// What one event (slice along the third axis) of an [`RFCube`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// One focused transmit along a scan line; the event parameter is the
    /// scan-line lateral position in meters.
    FocusedTe,
    /// One steered plane-wave transmit; the event parameter is the steering
    /// angle in radians.
    PlanewaveAngle,
}

/// Raw RF channel data indexed `[depth][rx][event]`, C row-major.
///
/// Sample `i` of any channel was recorded at time `2 * depth_start_m / c +
/// i / fs` after the transmit fired, i.e. the depth axis is the pulse-echo
/// axis with spacing `c / (2 fs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RFCube {
    samples: Vec<f64>,
    n_depth: usize,
    n_rx: usize,
    n_events: usize,
    pub depth_start_m: f64,
    pub depth_step_m: f64,
    pub event_kind: EventKind,
    /// Per-event scan-line x (focused) or steering angle (plane wave).
    pub event_params: Vec<f64>,
}

impl RFCube {
    /// Zero-filled cube with axis metadata derived from the probe.
    pub fn zeros(
        n_depth: usize,
        n_rx: usize,
        n_events: usize,
        depth_start_m: f64,
        probe: &ProbeConfig,
        event_kind: EventKind,
        event_params: Vec<f64>,
    ) -> Result<Self> {
        if event_params.len() != n_events {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{n_events} event params"),
                got: format!("{}", event_params.len()),
                context: "RFCube::zeros".into(),
            });
        }
        if n_depth == 0 || n_rx == 0 || n_events == 0 {
            return Err(CoreError::InvalidArgument(
                "RFCube dimensions must be nonzero".into(),
            ));
        }
        Ok(Self {
            samples: vec![0.0; n_depth * n_rx * n_events],
            n_depth,
            n_rx,
            n_events,
            depth_start_m,
            depth_step_m: probe.depth_step_m(),
            event_kind,
            event_params,
        })
    }

    /// Builds a cube from raw storage, validating shape and finiteness.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        samples: Vec<f64>,
        n_depth: usize,
        n_rx: usize,
        n_events: usize,
        depth_start_m: f64,
        depth_step_m: f64,
        event_kind: EventKind,
        event_params: Vec<f64>,
    ) -> Result<Self> {
        if samples.len() != n_depth * n_rx * n_events {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} samples", n_depth * n_rx * n_events),
                got: format!("{}", samples.len()),
                context: "RFCube::from_parts".into(),
            });
        }
        if event_params.len() != n_events {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{n_events} event params"),
                got: format!("{}", event_params.len()),
                context: "RFCube::from_parts".into(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("RFCube samples".into()));
        }
        Ok(Self {
            samples,
            n_depth,
            n_rx,
            n_events,
            depth_start_m,
            depth_step_m,
            event_kind,
            event_params,
        })
    }

    pub fn n_depth(&self) -> usize {
        self.n_depth
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Time of the first recorded sample relative to the transmit firing.
    pub fn t_start(&self, sound_speed_m_s: f64) -> f64 {
        2.0 * self.depth_start_m / sound_speed_m_s
    }

    #[inline]
    pub fn index(&self, depth: usize, rx: usize, event: usize) -> usize {
        (depth * self.n_rx + rx) * self.n_events + event
    }

    #[inline]
    pub fn at(&self, depth: usize, rx: usize, event: usize) -> f64 {
        self.samples[self.index(depth, rx, event)]
    }

    #[inline]
    pub fn at_mut(&mut self, depth: usize, rx: usize, event: usize) -> &mut f64 {
        let i = self.index(depth, rx, event);
        &mut self.samples[i]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    /// One channel as a depth series (copies; events and channels are not
    /// contiguous in storage).
    pub fn channel(&self, rx: usize, event: usize) -> Vec<f64> {
        (0..self.n_depth).map(|d| self.at(d, rx, event)).collect()
    }

    /// Elementwise sum with another cube of identical geometry.
    pub fn add(&mut self, other: &RFCube) -> Result<()> {
        if self.n_depth != other.n_depth
            || self.n_rx != other.n_rx
            || self.n_events != other.n_events
        {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{}x{}x{}", self.n_depth, self.n_rx, self.n_events),
                got: format!("{}x{}x{}", other.n_depth, other.n_rx, other.n_events),
                context: "RFCube::add".into(),
            });
        }
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += b;
        }
        Ok(())
    }

    pub fn validate(&self, probe: &ProbeConfig) -> Result<()> {
        let expected_step = probe.depth_step_m();
        if (self.depth_step_m - expected_step).abs() > 1e-9 * expected_step {
            return Err(CoreError::InvalidConfig(format!(
                "depth_step_m {} inconsistent with c/(2 fs) = {}",
                self.depth_step_m, expected_step
            )));
        }
        if self.samples.len() != self.n_depth * self.n_rx * self.n_events {
            return Err(CoreError::NonFinite("RFCube storage size".into()));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("RFCube samples".into()));
        }
        Ok(())
    }
}

/// In-phase/quadrature pair of one line of the analytic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct IQLine {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
}

impl IQLine {
    pub fn new(i: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if i.len() != q.len() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} Q samples", i.len()),
                got: format!("{}", q.len()),
                context: "IQLine::new".into(),
            });
        }
        if i.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("IQLine".into()));
        }
        Ok(Self { i, q })
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Envelope: magnitude of the analytic signal per sample.
    pub fn envelope(&self) -> Vec<f64> {
        self.i
            .iter()
            .zip(&self.q)
            .map(|(&i, &q)| i.hypot(q))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::default_probe;

    #[test]
    fn cube_depth_step_matches_pulse_echo_relation() {
        let p = default_probe();
        let cube = RFCube::zeros(16, 4, 2, 1e-3, &p, EventKind::FocusedTe, vec![0.0, 1e-3]).unwrap();
        let rel = (cube.depth_step_m * 2.0 * p.sampling_freq_hz - p.sound_speed_m_s).abs()
            / p.sound_speed_m_s;
        assert!(rel < 1e-9);
        cube.validate(&p).unwrap();
    }

    #[test]
    fn from_parts_rejects_bad_shapes_and_nonfinite() {
        let p = default_probe();
        let err = RFCube::from_parts(
            vec![0.0; 7],
            2,
            2,
            2,
            0.0,
            p.depth_step_m(),
            EventKind::FocusedTe,
            vec![0.0, 0.0],
        );
        assert!(err.is_err());

        let err = RFCube::from_parts(
            vec![f64::NAN; 8],
            2,
            2,
            2,
            0.0,
            p.depth_step_m(),
            EventKind::FocusedTe,
            vec![0.0, 0.0],
        );
        assert!(err.is_err());
    }

    #[test]
    fn iq_line_envelope_and_length_checks() {
        assert!(IQLine::new(vec![0.0, 1.0], vec![0.0]).is_err());
        let iq = IQLine::new(vec![3.0, 0.0], vec![4.0, 0.0]).unwrap();
        assert_eq!(iq.envelope(), vec![5.0, 0.0]);
    }
}
