//! Point-scatterer RF simulator for focused and plane-wave transmits.
//!
//! Forward model: each scatterer re-radiates the transmit pulse after the
//! one-way transmit path, every element records the echo after its own
//! return path, and amplitudes decay as 1/(d_tx * d_rx). Propagation is
//! linear under a constant sound speed, so cubes superpose exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cube::{EventKind, RFCube};
use crate::error::{CoreError, Result};
use crate::probe::ProbeConfig;

/// A point scatterer at (x, z) with a signed reflectivity amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub x_m: f64,
    pub z_m: f64,
    pub reflectivity: f64,
}

/// Circular inclusion; interior scatterer reflectivity is scaled by
/// `interior_scale` (0 = anechoic, scatterers removed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CystSpec {
    pub center_x_m: f64,
    pub center_z_m: f64,
    pub radius_m: f64,
    pub interior_scale: f64,
}

/// Scatterer field with its declared extents and cyst inclusions.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub scatterers: Vec<Scatterer>,
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub z_min_m: f64,
    pub z_max_m: f64,
    pub cysts: Vec<CystSpec>,
}

impl Phantom {
    pub fn validate(&self) -> Result<()> {
        for c in &self.cysts {
            if !(c.radius_m > 0.0) {
                return Err(CoreError::InvalidArgument("cyst radius must be > 0".into()));
            }
        }
        for s in &self.scatterers {
            if !s.reflectivity.is_finite() {
                return Err(CoreError::NonFinite("scatterer reflectivity".into()));
            }
            if s.x_m < self.x_min_m
                || s.x_m > self.x_max_m
                || s.z_m < self.z_min_m
                || s.z_m > self.z_max_m
            {
                return Err(CoreError::InvalidArgument(format!(
                    "scatterer at ({}, {}) outside declared extents",
                    s.x_m, s.z_m
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian-enveloped cosine burst at the carrier.
///
/// The envelope standard deviation follows from the -6 dB fractional
/// bandwidth of the Gaussian spectrum; the burst is truncated at
/// `cutoff_sigmas` envelope standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub center_freq_hz: f64,
    pub fractional_bandwidth: f64,
    pub cutoff_sigmas: f64,
}

impl Pulse {
    pub fn new(center_freq_hz: f64, fractional_bandwidth: f64) -> Result<Self> {
        if !(fractional_bandwidth > 0.0 && fractional_bandwidth < 2.0) {
            return Err(CoreError::InvalidArgument(format!(
                "fractional bandwidth must be in (0, 2), got {fractional_bandwidth}"
            )));
        }
        if !(center_freq_hz > 0.0) {
            return Err(CoreError::InvalidArgument(
                "pulse center frequency must be positive".into(),
            ));
        }
        Ok(Self {
            center_freq_hz,
            fractional_bandwidth,
            cutoff_sigmas: 3.0,
        })
    }

    /// Matches the probe carrier with the stock 0.6 fractional bandwidth.
    pub fn for_probe(probe: &ProbeConfig) -> Self {
        Self::new(probe.carrier_freq_hz, 0.6).expect("stock pulse parameters are valid")
    }

    /// Envelope sigma in seconds. For a Gaussian spectrum the -6 dB (half
    /// amplitude) band edges sit at sqrt(2 ln 2) spectral sigmas, so
    /// sigma_f = fbw * f0 / (2 sqrt(2 ln 2)) and sigma_t = 1 / (2 pi sigma_f).
    pub fn sigma_s(&self) -> f64 {
        let sigma_f =
            self.fractional_bandwidth * self.center_freq_hz / (2.0 * (2.0 * 2f64.ln()).sqrt());
        1.0 / (2.0 * std::f64::consts::PI * sigma_f)
    }

    /// Half support of the truncated burst in seconds.
    pub fn half_support_s(&self) -> f64 {
        self.cutoff_sigmas * self.sigma_s()
    }

    /// Total burst duration expressed in carrier periods.
    pub fn duration_periods(&self) -> f64 {
        2.0 * self.half_support_s() * self.center_freq_hz
    }

    #[inline]
    pub fn eval(&self, t_s: f64) -> f64 {
        if t_s.abs() > self.half_support_s() {
            return 0.0;
        }
        let s = self.sigma_s();
        (-(t_s * t_s) / (2.0 * s * s)).exp()
            * (2.0 * std::f64::consts::PI * self.center_freq_hz * t_s).cos()
    }
}

/// Speckle phantom: uniformly placed scatterers with Rayleigh-distributed
/// reflectivity magnitudes, carved by the given cysts.
///
/// The scatterer count is `round(density * area)` so runs are exactly
/// reproducible from the seed.
pub fn make_cyst_phantom(
    x_min_m: f64,
    x_max_m: f64,
    z_min_m: f64,
    z_max_m: f64,
    density_per_m2: f64,
    cysts: &[CystSpec],
    rng_seed: u64,
) -> Result<Phantom> {
    let width = x_max_m - x_min_m;
    let height = z_max_m - z_min_m;
    if !(width > 0.0 && height > 0.0) {
        return Err(CoreError::InvalidArgument(
            "phantom extent must have positive area".into(),
        ));
    }
    if !(density_per_m2 > 0.0) {
        return Err(CoreError::InvalidArgument(
            "scatterer density must be positive".into(),
        ));
    }
    if z_min_m <= 0.0 {
        return Err(CoreError::InvalidArgument(
            "phantom must sit strictly below the transducer face (z > 0)".into(),
        ));
    }
    for c in cysts {
        if !(c.radius_m > 0.0) {
            return Err(CoreError::InvalidArgument("cyst radius must be > 0".into()));
        }
    }

    let n = (density_per_m2 * width * height).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut scatterers = Vec::with_capacity(n);
    for _ in 0..n {
        let x = x_min_m + rng.gen::<f64>() * width;
        let z = z_min_m + rng.gen::<f64>() * height;
        // Unit-scale Rayleigh magnitude by inverse transform, random sign.
        let u: f64 = rng.gen();
        let mut amp = (-2.0 * (1.0 - u).max(f64::MIN_POSITIVE).ln()).sqrt();
        if rng.gen::<bool>() {
            amp = -amp;
        }
        let mut keep = true;
        for c in cysts {
            let dx = x - c.center_x_m;
            let dz = z - c.center_z_m;
            if dx * dx + dz * dz <= c.radius_m * c.radius_m {
                if c.interior_scale == 0.0 {
                    keep = false;
                } else {
                    amp *= c.interior_scale;
                }
            }
        }
        if keep {
            scatterers.push(Scatterer {
                x_m: x,
                z_m: z,
                reflectivity: amp,
            });
        }
    }
    Ok(Phantom {
        scatterers,
        x_min_m,
        x_max_m,
        z_min_m,
        z_max_m,
        cysts: cysts.to_vec(),
    })
}

/// `n_pw` steering angles uniformly spaced on [-max, +max]; includes 0 when
/// `n_pw` is odd.
pub fn angle_set(n_pw: usize, max_angle_rad: f64) -> Vec<f64> {
    assert!(n_pw >= 1, "need at least one angle");
    if n_pw == 1 {
        return vec![0.0];
    }
    let step = 2.0 * max_angle_rad / (n_pw as f64 - 1.0);
    (0..n_pw)
        .map(|k| -max_angle_rad + k as f64 * step)
        .collect()
}

fn check_scatterers_ahead(phantom: &Phantom) -> Result<()> {
    if phantom.scatterers.iter().any(|s| s.z_m <= 0.0) {
        return Err(CoreError::InvalidArgument(
            "scatterer at or behind the transducer face (z <= 0)".into(),
        ));
    }
    Ok(())
}

// Deposits one echo into a channel's depth series. `tau_s` is the two-way
// arrival time; samples cover t_start + i/fs.
#[inline]
fn deposit_echo(
    channel: &mut [f64],
    amplitude: f64,
    tau_s: f64,
    t_start_s: f64,
    fs: f64,
    pulse: &Pulse,
) {
    let half = pulse.half_support_s();
    let i_lo = ((tau_s - half - t_start_s) * fs).ceil().max(0.0) as usize;
    let i_hi = (((tau_s + half - t_start_s) * fs).floor()).min(channel.len() as f64 - 1.0);
    if i_hi < 0.0 {
        return;
    }
    let i_hi = i_hi as usize;
    for i in i_lo..=i_hi {
        let t = t_start_s + i as f64 / fs;
        channel[i] += amplitude * pulse.eval(t - tau_s);
    }
}

/// RF for one focused transmit event: `[n_depth x n_rx_focused x 1]`.
///
/// Transmit is modeled as a point source at the scan-line origin on the
/// transducer face, so the analytic two-way delay of a scatterer is
/// `(d_tx + d_rx) / c` exactly.
pub fn simulate_focused_rf(
    phantom: &Phantom,
    probe: &ProbeConfig,
    pulse: &Pulse,
    te_index: usize,
    n_depth: usize,
    depth_start_m: f64,
) -> Result<RFCube> {
    if te_index >= probe.n_te_focused {
        return Err(CoreError::InvalidArgument(format!(
            "te_index {te_index} out of range (< {})",
            probe.n_te_focused
        )));
    }
    check_scatterers_ahead(phantom)?;
    let line_x = probe.scan_line_x(te_index);
    let ap_start = probe.focused_aperture_start(te_index);
    let c = probe.sound_speed_m_s;
    let fs = probe.sampling_freq_hz;
    let t_start = 2.0 * depth_start_m / c;

    let mut cube = RFCube::zeros(
        n_depth,
        probe.n_rx_focused,
        1,
        depth_start_m,
        probe,
        EventKind::FocusedTe,
        vec![line_x],
    )?;

    let mut channel = vec![0.0f64; n_depth];
    for rx in 0..probe.n_rx_focused {
        let rx_x = probe.element_x(ap_start + rx);
        channel.fill(0.0);
        for s in &phantom.scatterers {
            let d_tx = ((s.x_m - line_x).powi(2) + s.z_m * s.z_m).sqrt();
            let d_rx = ((s.x_m - rx_x).powi(2) + s.z_m * s.z_m).sqrt();
            let tau = (d_tx + d_rx) / c;
            let amp = s.reflectivity / (d_tx * d_rx);
            deposit_echo(&mut channel, amp, tau, t_start, fs, pulse);
        }
        for d in 0..n_depth {
            *cube.at_mut(d, rx, 0) = channel[d];
        }
    }
    Ok(cube)
}

/// RF for one steered plane-wave transmit: `[n_depth x n_rx_planewave x 1]`.
///
/// The wavefront passes the array center at t = 0, so the transmit path of a
/// scatterer at (x, z) is `z cos(theta) + x sin(theta)`.
pub fn simulate_planewave_rf(
    phantom: &Phantom,
    probe: &ProbeConfig,
    pulse: &Pulse,
    angle_rad: f64,
    n_depth: usize,
    depth_start_m: f64,
) -> Result<RFCube> {
    if angle_rad.abs() >= std::f64::consts::FRAC_PI_4 {
        return Err(CoreError::InvalidArgument(format!(
            "steering angle {angle_rad} rad outside (-pi/4, pi/4)"
        )));
    }
    check_scatterers_ahead(phantom)?;
    let c = probe.sound_speed_m_s;
    let fs = probe.sampling_freq_hz;
    let t_start = 2.0 * depth_start_m / c;
    let (sin_t, cos_t) = angle_rad.sin_cos();
    // Guards the 1/(d_tx d_rx) spreading against vanishing transmit paths at
    // grazing geometry; delays keep the raw value.
    const MIN_TX_PATH_M: f64 = 1e-4;

    let mut cube = RFCube::zeros(
        n_depth,
        probe.n_rx_planewave,
        1,
        depth_start_m,
        probe,
        EventKind::PlanewaveAngle,
        vec![angle_rad],
    )?;

    let mut channel = vec![0.0f64; n_depth];
    for rx in 0..probe.n_rx_planewave {
        let rx_x = probe.element_x(rx);
        channel.fill(0.0);
        for s in &phantom.scatterers {
            let d_tx = s.z_m * cos_t + s.x_m * sin_t;
            let d_rx = ((s.x_m - rx_x).powi(2) + s.z_m * s.z_m).sqrt();
            let tau = (d_tx + d_rx) / c;
            let amp = s.reflectivity / (d_tx.max(MIN_TX_PATH_M) * d_rx);
            deposit_echo(&mut channel, amp, tau, t_start, fs, pulse);
        }
        for d in 0..n_depth {
            *cube.at_mut(d, rx, 0) = channel[d];
        }
    }
    Ok(cube)
}

/// Full focused frame: all transmit events assembled into one cube
/// `[n_depth x n_rx_focused x n_te]`. Events simulate in parallel.
pub fn simulate_focused_frame(
    phantom: &Phantom,
    probe: &ProbeConfig,
    pulse: &Pulse,
    n_depth: usize,
    depth_start_m: f64,
) -> Result<RFCube> {
    let slices: Vec<RFCube> = (0..probe.n_te_focused)
        .into_par_iter()
        .map(|te| simulate_focused_rf(phantom, probe, pulse, te, n_depth, depth_start_m))
        .collect::<Result<_>>()?;
    let params: Vec<f64> = (0..probe.n_te_focused)
        .map(|te| probe.scan_line_x(te))
        .collect();
    let mut cube = RFCube::zeros(
        n_depth,
        probe.n_rx_focused,
        probe.n_te_focused,
        depth_start_m,
        probe,
        EventKind::FocusedTe,
        params,
    )?;
    for (te, slice) in slices.iter().enumerate() {
        for d in 0..n_depth {
            for r in 0..probe.n_rx_focused {
                *cube.at_mut(d, r, te) = slice.at(d, r, 0);
            }
        }
    }
    Ok(cube)
}

/// Full plane-wave frame over the given angles:
/// `[n_depth x n_rx_planewave x n_angles]`.
pub fn simulate_planewave_frame(
    phantom: &Phantom,
    probe: &ProbeConfig,
    pulse: &Pulse,
    angles_rad: &[f64],
    n_depth: usize,
    depth_start_m: f64,
) -> Result<RFCube> {
    let slices: Vec<RFCube> = angles_rad
        .par_iter()
        .map(|&a| simulate_planewave_rf(phantom, probe, pulse, a, n_depth, depth_start_m))
        .collect::<Result<_>>()?;
    let mut cube = RFCube::zeros(
        n_depth,
        probe.n_rx_planewave,
        angles_rad.len(),
        depth_start_m,
        probe,
        EventKind::PlanewaveAngle,
        angles_rad.to_vec(),
    )?;
    for (e, slice) in slices.iter().enumerate() {
        for d in 0..n_depth {
            for r in 0..probe.n_rx_planewave {
                *cube.at_mut(d, r, e) = slice.at(d, r, 0);
            }
        }
    }
    Ok(cube)
}

/// Adds white Gaussian noise at the given SNR (dB) relative to the cube's
/// RMS. No-op on all-zero cubes.
pub fn add_noise(cube: &mut RFCube, snr_db: f64, rng_seed: u64) {
    let n = cube.samples().len() as f64;
    let rms = (cube.samples().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms == 0.0 {
        return;
    }
    let sigma = rms / 10f64.powf(snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for v in cube.samples_mut() {
        *v += normal.sample(&mut rng);
    }
}
