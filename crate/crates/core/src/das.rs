//! Delay-and-sum beamforming for focused and plane-wave acquisitions, plus
//! the shared signal chain: analytic signal, envelope, log compression.
//!
//! The delay model is time reversal under a constant sound speed: the sample
//! each channel contributes to a pixel is read at the two-way geometric
//! travel time, linearly interpolated between adjacent samples. Reads beyond
//! the recorded window contribute zero.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::bmode::BModeImage;
use crate::cube::{EventKind, IQLine, RFCube};
use crate::error::{CoreError, Result};
use crate::probe::ProbeConfig;
use crate::subsample::{MaskKind, SamplingMask};

/// Beamformed RF (pre-envelope) on a depth x lateral grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedLines {
    /// Row-major `[depth][lateral]`.
    pub rf_sum: Vec<f64>,
    pub n_depth: usize,
    pub lateral_positions_m: Vec<f64>,
    pub depth_start_m: f64,
    pub depth_step_m: f64,
}

impl BeamformedLines {
    pub fn n_lateral(&self) -> usize {
        self.lateral_positions_m.len()
    }

    #[inline]
    pub fn at(&self, depth: usize, lateral: usize) -> f64 {
        self.rf_sum[depth * self.lateral_positions_m.len() + lateral]
    }
}

/// Per-channel receive-aligned samples for focused acquisition, laid out
/// `[depth][rx][te]` so one depth plane is contiguous. Summing a plane's
/// channel axis reproduces delay-and-sum exactly.
#[derive(Debug, Clone)]
pub struct AlignedFocused {
    pub data: Vec<f64>,
    pub n_depth: usize,
    pub n_rx: usize,
    pub n_te: usize,
}

impl AlignedFocused {
    #[inline]
    pub fn at(&self, depth: usize, rx: usize, te: usize) -> f64 {
        self.data[(depth * self.n_rx + rx) * self.n_te + te]
    }

    pub fn plane(&self, depth: usize) -> &[f64] {
        let stride = self.n_rx * self.n_te;
        &self.data[depth * stride..(depth + 1) * stride]
    }
}

/// Per-channel aligned samples for plane-wave acquisition, laid out
/// `[depth][pw][rx]`; channel `rx` is aligned for the pixel at its own
/// lateral position.
#[derive(Debug, Clone)]
pub struct AlignedPlanewave {
    pub data: Vec<f64>,
    pub n_depth: usize,
    pub n_pw: usize,
    pub n_rx: usize,
}

impl AlignedPlanewave {
    #[inline]
    pub fn at(&self, depth: usize, pw: usize, rx: usize) -> f64 {
        self.data[(depth * self.n_pw + pw) * self.n_rx + rx]
    }

    pub fn plane(&self, depth: usize) -> &[f64] {
        let stride = self.n_pw * self.n_rx;
        &self.data[depth * stride..(depth + 1) * stride]
    }
}

/// Two-way travel time for dynamic receive focusing on a scan line.
pub fn rx_delay_focused(depth_m: f64, rx_x_m: f64, line_x_m: f64, c_m_s: f64) -> f64 {
    let dx = rx_x_m - line_x_m;
    (depth_m + (depth_m * depth_m + dx * dx).sqrt()) / c_m_s
}

/// Two-way travel time for a steered plane wave at pixel (x, depth).
pub fn rx_delay_planewave(
    depth_m: f64,
    x_m: f64,
    rx_x_m: f64,
    angle_rad: f64,
    c_m_s: f64,
) -> f64 {
    let dx = rx_x_m - x_m;
    (depth_m * angle_rad.cos() + x_m * angle_rad.sin() + (depth_m * depth_m + dx * dx).sqrt())
        / c_m_s
}

// Linear interpolation at fractional sample position; out-of-window reads
// count as zero.
#[inline]
fn interp(channel: &[f64], pos: f64) -> f64 {
    if pos < 0.0 {
        return 0.0;
    }
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 < channel.len() {
        (1.0 - frac) * channel[k] + frac * channel[k + 1]
    } else if k < channel.len() && frac == 0.0 {
        channel[k]
    } else if k < channel.len() {
        (1.0 - frac) * channel[k]
    } else {
        0.0
    }
}

fn check_focused_mask(cube: &RFCube, mask: Option<&SamplingMask>) -> Result<()> {
    if let Some(m) = mask {
        if m.kind != MaskKind::FocusedChannels {
            return Err(CoreError::InvalidArgument(
                "channel beamforming requires a channel mask".into(),
            ));
        }
        if m.n_planes() != cube.n_depth() || m.row_len() != cube.n_rx() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{}x{} mask", cube.n_depth(), cube.n_rx()),
                got: format!("{}x{}", m.n_planes(), m.row_len()),
                context: "beamform mask".into(),
            });
        }
    }
    Ok(())
}

// Copies one channel's depth series, zeroing samples the mask disables.
fn masked_channel(
    cube: &RFCube,
    rx: usize,
    event: usize,
    mask: Option<&SamplingMask>,
    buf: &mut Vec<f64>,
) {
    buf.clear();
    match mask {
        None => buf.extend((0..cube.n_depth()).map(|d| cube.at(d, rx, event))),
        Some(m) => buf.extend((0..cube.n_depth()).map(|d| {
            if m.is_active(d, rx) {
                cube.at(d, rx, event)
            } else {
                0.0
            }
        })),
    }
}

/// Delay-and-sum over the receive aperture for every scan line of a focused
/// cube. No apodization; inactive (masked) channel samples contribute zero.
pub fn das_focused(
    cube: &RFCube,
    probe: &ProbeConfig,
    mask: Option<&SamplingMask>,
) -> Result<BeamformedLines> {
    if cube.event_kind != EventKind::FocusedTe {
        return Err(CoreError::InvalidArgument(
            "das_focused requires a focused cube".into(),
        ));
    }
    check_focused_mask(cube, mask)?;
    let n_depth = cube.n_depth();
    let n_te = cube.n_events();
    let c = probe.sound_speed_m_s;
    let fs = probe.sampling_freq_hz;
    let t0 = cube.t_start(c);

    let columns: Vec<Vec<f64>> = (0..n_te)
        .into_par_iter()
        .map(|te| {
            let line_x = cube.event_params[te];
            let ap_start = probe.aperture_start_for_x(line_x);
            let mut acc = vec![0.0f64; n_depth];
            let mut chan = Vec::with_capacity(n_depth);
            for rx in 0..cube.n_rx() {
                let rx_x = probe.element_x(ap_start + rx);
                masked_channel(cube, rx, te, mask, &mut chan);
                for (i, a) in acc.iter_mut().enumerate() {
                    let d = cube.depth_start_m + i as f64 * cube.depth_step_m;
                    let tau = rx_delay_focused(d, rx_x, line_x, c);
                    *a += interp(&chan, (tau - t0) * fs);
                }
            }
            acc
        })
        .collect();

    let mut rf_sum = vec![0.0f64; n_depth * n_te];
    for (te, col) in columns.iter().enumerate() {
        for d in 0..n_depth {
            rf_sum[d * n_te + te] = col[d];
        }
    }
    Ok(BeamformedLines {
        rf_sum,
        n_depth,
        lateral_positions_m: cube.event_params.clone(),
        depth_start_m: cube.depth_start_m,
        depth_step_m: cube.depth_step_m,
    })
}

/// Receive-aligned channel data for a focused cube: the exact per-channel
/// samples `das_focused` sums, kept separate per channel.
pub fn delay_align_focused(
    cube: &RFCube,
    probe: &ProbeConfig,
    mask: Option<&SamplingMask>,
) -> Result<AlignedFocused> {
    if cube.event_kind != EventKind::FocusedTe {
        return Err(CoreError::InvalidArgument(
            "delay_align_focused requires a focused cube".into(),
        ));
    }
    check_focused_mask(cube, mask)?;
    let n_depth = cube.n_depth();
    let n_rx = cube.n_rx();
    let n_te = cube.n_events();
    let c = probe.sound_speed_m_s;
    let fs = probe.sampling_freq_hz;
    let t0 = cube.t_start(c);

    let per_te: Vec<Vec<f64>> = (0..n_te)
        .into_par_iter()
        .map(|te| {
            let line_x = cube.event_params[te];
            let ap_start = probe.aperture_start_for_x(line_x);
            let mut out = vec![0.0f64; n_depth * n_rx];
            let mut chan = Vec::with_capacity(n_depth);
            for rx in 0..n_rx {
                let rx_x = probe.element_x(ap_start + rx);
                masked_channel(cube, rx, te, mask, &mut chan);
                for d in 0..n_depth {
                    let z = cube.depth_start_m + d as f64 * cube.depth_step_m;
                    let tau = rx_delay_focused(z, rx_x, line_x, c);
                    out[d * n_rx + rx] = interp(&chan, (tau - t0) * fs);
                }
            }
            out
        })
        .collect();

    let mut data = vec![0.0f64; n_depth * n_rx * n_te];
    for (te, block) in per_te.iter().enumerate() {
        for d in 0..n_depth {
            for rx in 0..n_rx {
                data[(d * n_rx + rx) * n_te + te] = block[d * n_rx + rx];
            }
        }
    }
    Ok(AlignedFocused {
        data,
        n_depth,
        n_rx,
        n_te,
    })
}

fn selected_angles(cube: &RFCube, pw_subset: Option<&SamplingMask>) -> Result<Vec<usize>> {
    match pw_subset {
        None => Ok((0..cube.n_events()).collect()),
        Some(m) => {
            if m.kind != MaskKind::PwAngles {
                return Err(CoreError::InvalidArgument(
                    "plane-wave compounding requires an angle mask".into(),
                ));
            }
            if m.row_len() != cube.n_events() {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{} angles", cube.n_events()),
                    got: format!("{}", m.row_len()),
                    context: "pw subset".into(),
                });
            }
            let idx = m.active_indices();
            if idx.is_empty() {
                return Err(CoreError::InvalidArgument("empty plane-wave subset".into()));
            }
            Ok(idx)
        }
    }
}

// Contiguous [event][rx][depth] copy with the channel mask burned in.
fn transpose_masked(cube: &RFCube, mask: Option<&SamplingMask>) -> Vec<f64> {
    let (n_depth, n_rx, n_ev) = (cube.n_depth(), cube.n_rx(), cube.n_events());
    let mut t = vec![0.0f64; n_ev * n_rx * n_depth];
    for d in 0..n_depth {
        for rx in 0..n_rx {
            let active = mask.map_or(true, |m| m.is_active(d, rx));
            if !active {
                continue;
            }
            for e in 0..n_ev {
                t[(e * n_rx + rx) * n_depth + d] = cube.at(d, rx, e);
            }
        }
    }
    t
}

/// Coherent plane-wave compounding on the element-position lateral grid.
///
/// Per pixel: delay-interpolate-sum over active channels for each selected
/// angle, then a pre-envelope sum over angles. The per-angle images add in
/// index order, so compounding equals the sum of single-angle images exactly.
pub fn das_planewave_compound(
    cube: &RFCube,
    probe: &ProbeConfig,
    pw_subset: Option<&SamplingMask>,
    channel_mask: Option<&SamplingMask>,
) -> Result<BeamformedLines> {
    if cube.event_kind != EventKind::PlanewaveAngle {
        return Err(CoreError::InvalidArgument(
            "das_planewave_compound requires a plane-wave cube".into(),
        ));
    }
    check_focused_mask(cube, channel_mask)?;
    let angles = selected_angles(cube, pw_subset)?;
    let n_depth = cube.n_depth();
    let n_rx = cube.n_rx();
    let c = probe.sound_speed_m_s;
    let fs = probe.sampling_freq_hz;
    let t0 = cube.t_start(c);
    let lateral: Vec<f64> = (0..n_rx).map(|r| probe.element_x(r)).collect();
    let transposed = transpose_masked(cube, channel_mask);

    let columns: Vec<Vec<f64>> = (0..n_rx)
        .into_par_iter()
        .map(|j| {
            let x_j = lateral[j];
            // Receive paths are angle-independent; compute once per column.
            let mut rx_path = vec![0.0f64; n_rx * n_depth];
            for rx in 0..n_rx {
                let dx = lateral[rx] - x_j;
                for i in 0..n_depth {
                    let d = cube.depth_start_m + i as f64 * cube.depth_step_m;
                    rx_path[rx * n_depth + i] = (d * d + dx * dx).sqrt();
                }
            }
            let mut acc = vec![0.0f64; n_depth];
            let mut angle_img = vec![0.0f64; n_depth];
            for &e in &angles {
                let theta = cube.event_params[e];
                let (sin_t, cos_t) = theta.sin_cos();
                let tx_lat = x_j * sin_t;
                angle_img.fill(0.0);
                for rx in 0..n_rx {
                    let chan = &transposed[(e * n_rx + rx) * n_depth..][..n_depth];
                    let paths = &rx_path[rx * n_depth..][..n_depth];
                    for i in 0..n_depth {
                        let d = cube.depth_start_m + i as f64 * cube.depth_step_m;
                        let tau = (d * cos_t + tx_lat + paths[i]) / c;
                        angle_img[i] += interp(chan, (tau - t0) * fs);
                    }
                }
                for i in 0..n_depth {
                    acc[i] += angle_img[i];
                }
            }
            acc
        })
        .collect();

    let mut rf_sum = vec![0.0f64; n_depth * n_rx];
    for (j, col) in columns.iter().enumerate() {
        for d in 0..n_depth {
            rf_sum[d * n_rx + j] = col[d];
        }
    }
    Ok(BeamformedLines {
        rf_sum,
        n_depth,
        lateral_positions_m: lateral,
        depth_start_m: cube.depth_start_m,
        depth_step_m: cube.depth_step_m,
    })
}

/// Aligned plane-wave channel data: channel `rx` delayed for the pixel at
/// its own lateral position, per angle, laid out `[depth][pw][rx]`.
/// Angles excluded by `pw_subset` stay as zero rows.
pub fn delay_align_planewave(
    cube: &RFCube,
    probe: &ProbeConfig,
    pw_subset: Option<&SamplingMask>,
    channel_mask: Option<&SamplingMask>,
) -> Result<AlignedPlanewave> {
    if cube.event_kind != EventKind::PlanewaveAngle {
        return Err(CoreError::InvalidArgument(
            "delay_align_planewave requires a plane-wave cube".into(),
        ));
    }
    check_focused_mask(cube, channel_mask)?;
    let keep = selected_angles(cube, pw_subset)?;
    let n_depth = cube.n_depth();
    let n_rx = cube.n_rx();
    let n_pw = cube.n_events();
    let c = probe.sound_speed_m_s;
    let fs = probe.sampling_freq_hz;
    let t0 = cube.t_start(c);
    let transposed = transpose_masked(cube, channel_mask);

    let per_rx: Vec<Vec<f64>> = (0..n_rx)
        .into_par_iter()
        .map(|rx| {
            let x = probe.element_x(rx);
            let mut out = vec![0.0f64; n_depth * n_pw];
            for &e in &keep {
                let theta = cube.event_params[e];
                let (sin_t, cos_t) = theta.sin_cos();
                let chan = &transposed[(e * n_rx + rx) * n_depth..][..n_depth];
                for d in 0..n_depth {
                    let z = cube.depth_start_m + d as f64 * cube.depth_step_m;
                    let tau = (z * cos_t + x * sin_t + z) / c;
                    out[d * n_pw + e] = interp(chan, (tau - t0) * fs);
                }
            }
            out
        })
        .collect();

    let mut data = vec![0.0f64; n_depth * n_pw * n_rx];
    for (rx, block) in per_rx.iter().enumerate() {
        for d in 0..n_depth {
            for e in 0..n_pw {
                data[(d * n_pw + e) * n_rx + rx] = block[d * n_pw + e];
            }
        }
    }
    Ok(AlignedPlanewave {
        data,
        n_depth,
        n_pw,
        n_rx,
    })
}

/// FFT-based analytic signal: negative frequencies zeroed, positive doubled,
/// DC and Nyquist kept. The in-phase part is the input itself.
pub fn hilbert_analytic(signal: &[f64]) -> Result<IQLine> {
    if signal.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "analytic signal needs at least 2 samples".into(),
        ));
    }
    let mut planner = FftPlanner::new();
    let q = analytic_quadrature(signal, &mut planner);
    IQLine::new(signal.to_vec(), q)
}

// Quadrature component of the analytic signal; shares a caller-owned planner.
fn analytic_quadrature(signal: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = signal.len();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let half = n / 2;
    if n % 2 == 0 {
        for v in buf.iter_mut().take(half).skip(1) {
            *v *= 2.0;
        }
        for v in buf.iter_mut().skip(half + 1) {
            *v = Complex::new(0.0, 0.0);
        }
    } else {
        for v in buf.iter_mut().take(half + 1).skip(1) {
            *v *= 2.0;
        }
        for v in buf.iter_mut().skip(half + 1) {
            *v = Complex::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|v| v.im * scale).collect()
}

/// What `envelope_log_compress` detects the envelope from.
pub enum EnvelopeSource<'a> {
    /// Beamformed RF; the envelope comes from the analytic signal of each
    /// lateral column along depth.
    Rf(&'a BeamformedLines),
    /// Precomputed I/Q planes, row-major `[depth][lateral]` each.
    Iq {
        i: &'a [f64],
        q: &'a [f64],
        n_depth: usize,
        n_lateral: usize,
    },
}

/// Envelope detection and log compression to `[-dynamic_range_db, 0]`,
/// normalized so the frame maximum maps to 0 dB exactly.
///
/// An all-zero frame yields a uniform `-dynamic_range_db` image flagged as
/// blank.
pub fn envelope_log_compress(source: EnvelopeSource, dynamic_range_db: f64) -> Result<BModeImage> {
    let (env, n_depth, n_lateral) = match source {
        EnvelopeSource::Rf(lines) => {
            let n_depth = lines.n_depth;
            let n_lateral = lines.n_lateral();
            if n_depth < 2 {
                return Err(CoreError::InvalidArgument(
                    "need at least 2 depth samples for envelope detection".into(),
                ));
            }
            let mut planner = FftPlanner::new();
            let mut env = vec![0.0f64; n_depth * n_lateral];
            let mut col = vec![0.0f64; n_depth];
            for j in 0..n_lateral {
                for d in 0..n_depth {
                    col[d] = lines.at(d, j);
                }
                let q = analytic_quadrature(&col, &mut planner);
                for d in 0..n_depth {
                    env[d * n_lateral + j] = col[d].hypot(q[d]);
                }
            }
            (env, n_depth, n_lateral)
        }
        EnvelopeSource::Iq {
            i,
            q,
            n_depth,
            n_lateral,
        } => {
            if i.len() != n_depth * n_lateral || q.len() != i.len() {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{} I/Q samples", n_depth * n_lateral),
                    got: format!("{}/{}", i.len(), q.len()),
                    context: "envelope_log_compress".into(),
                });
            }
            let env = i
                .iter()
                .zip(q)
                .map(|(&a, &b)| a.hypot(b))
                .collect::<Vec<_>>();
            (env, n_depth, n_lateral)
        }
    };

    let max = env.iter().copied().fold(0.0f64, f64::max);
    if !max.is_finite() {
        return Err(CoreError::NonFinite("envelope".into()));
    }
    if max == 0.0 {
        return BModeImage::from_pixels(
            vec![-dynamic_range_db; n_depth * n_lateral],
            n_depth,
            n_lateral,
            dynamic_range_db,
            true,
        );
    }
    let pixels: Vec<f64> = env
        .iter()
        .map(|&e| {
            let db = 20.0 * (e / max).log10();
            db.max(-dynamic_range_db)
        })
        .collect();
    BModeImage::from_pixels(pixels, n_depth, n_lateral, dynamic_range_db, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::default_probe;
    use crate::sim::{simulate_focused_frame, simulate_planewave_frame, Phantom, Pulse, Scatterer};
    use crate::subsample::make_focused_mask;

    fn point_phantom(x: f64, z: f64) -> Phantom {
        Phantom {
            scatterers: vec![Scatterer {
                x_m: x,
                z_m: z,
                reflectivity: 1.0,
            }],
            x_min_m: -0.02,
            x_max_m: 0.02,
            z_min_m: 1e-4,
            z_max_m: 0.05,
            cysts: vec![],
        }
    }

    #[test]
    fn delay_examples() {
        let c = 1540.0;
        // On-axis: two-way 2d/c.
        let d = 0.007;
        assert!((rx_delay_focused(d, 0.001, 0.001, c) - 2.0 * d / c).abs() < 1e-18);
        // 3-4-5 triangle: depth 3 mm, offset 4 mm.
        let t = rx_delay_focused(0.003, 0.005, 0.001, c);
        assert!((t - 0.008 / 1540.0).abs() < 1e-15);
        assert!((t - 5.1948e-6).abs() < 1e-9);
        // Monotone in |offset|.
        let mut prev = rx_delay_focused(0.01, 0.0, 0.0, c);
        for k in 1..20 {
            let cur = rx_delay_focused(0.01, k as f64 * 1e-4, 0.0, c);
            assert!(cur > prev);
            prev = cur;
        }
        // Plane wave at zero steering reduces to the focused delay.
        for &(d, x, rx) in &[(0.005, 1e-3, -2e-3), (0.012, -0.5e-3, 3e-3)] {
            let a = rx_delay_planewave(d, x, rx, 0.0, c);
            let b = rx_delay_focused(d, rx, x, c);
            assert!((a - b).abs() < 1e-18);
        }
        // Steered hand value: d = 3 mm, x = rx_x = 2 mm, theta = 30 degrees.
        let th = 30f64.to_radians();
        let got = rx_delay_planewave(0.003, 0.002, 0.002, th, c);
        let want = (0.003 * th.cos() + 0.002 * th.sin() + 0.003) / 1540.0;
        assert!((got - want).abs() < 1e-18);
    }

    #[test]
    fn das_focused_peaks_at_scatterer_and_grows_with_aperture() {
        let probe = default_probe();
        let pulse = Pulse::for_probe(&probe);
        let te = 48;
        let z = 0.011;
        let phantom = point_phantom(probe.scan_line_x(te), z);
        let cube = simulate_focused_frame(&phantom, &probe, &pulse, 1300, 0.0).unwrap();

        let full = das_focused(&cube, &probe, None).unwrap();
        let img = envelope_log_compress(EnvelopeSource::Rf(&full), 60.0).unwrap();
        let (pd, pl) = img.argmax();
        let expect_d =
            (2.0 * z / probe.sound_speed_m_s * probe.sampling_freq_hz).round() as i64;
        assert!((pd as i64 - expect_d).abs() <= 1);
        assert_eq!(pl, te);

        let m16 = make_focused_mask(cube.n_depth(), 64, 16, 2).unwrap();
        let sub = das_focused(&cube, &probe, Some(&m16)).unwrap();
        let peak = |l: &BeamformedLines| {
            (0..l.n_depth)
                .map(|d| l.at(d, te).abs())
                .fold(0.0f64, f64::max)
        };
        assert!(peak(&full) > peak(&sub));
    }

    #[test]
    fn das_on_all_zero_cube_is_zero() {
        let probe = default_probe();
        let cube = RFCube::zeros(
            128,
            64,
            4,
            0.0,
            &probe,
            EventKind::FocusedTe,
            vec![0.0, 1e-3, 2e-3, 3e-3],
        )
        .unwrap();
        let out = das_focused(&cube, &probe, None).unwrap();
        assert!(out.rf_sum.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_pair_mask_equals_center_pair_sum() {
        let probe = default_probe();
        let pulse = Pulse::for_probe(&probe);
        let te = 48;
        let phantom = point_phantom(probe.scan_line_x(te) + 3e-4, 0.009);
        let cube = simulate_focused_frame(&phantom, &probe, &pulse, 1100, 0.0).unwrap();

        let rows = vec![
            {
                let mut r = vec![false; 64];
                r[31] = true;
                r[32] = true;
                r
            };
            cube.n_depth()
        ];
        let mask = SamplingMask::from_rows(MaskKind::FocusedChannels, rows, 2, 0).unwrap();
        let masked = das_focused(&cube, &probe, Some(&mask)).unwrap();

        // Manual sum over exactly channels 31 and 32.
        let aligned = delay_align_focused(&cube, &probe, None).unwrap();
        for d in 0..cube.n_depth() {
            for te_i in 0..cube.n_events() {
                let manual = aligned.at(d, 31, te_i) + aligned.at(d, 32, te_i);
                assert!((masked.at(d, te_i) - manual).abs() < 1e-12 * manual.abs().max(1.0));
            }
        }
    }

    #[test]
    fn das_is_linear_and_aperture_is_monotone_on_peak() {
        let probe = default_probe();
        let pulse = Pulse::for_probe(&probe);
        let te = 48;
        let z = 0.010;
        let phantom = point_phantom(probe.scan_line_x(te), z);
        let cube = simulate_focused_frame(&phantom, &probe, &pulse, 1200, 0.0).unwrap();

        // Linearity.
        let mut scaled = cube.clone();
        for v in scaled.samples_mut() {
            *v *= 0.25;
        }
        let mut summed = cube.clone();
        summed.add(&scaled).unwrap();
        let a = das_focused(&cube, &probe, None).unwrap();
        let b = das_focused(&scaled, &probe, None).unwrap();
        let ab = das_focused(&summed, &probe, None).unwrap();
        let scale = ab.rf_sum.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for i in 0..ab.rf_sum.len() {
            assert!((ab.rf_sum[i] - (a.rf_sum[i] + b.rf_sum[i])).abs() <= 1e-12 * scale);
        }

        // On-peak response grows (non-strictly) as channels join the mask.
        let peak_d = (2.0 * z / probe.sound_speed_m_s * probe.sampling_freq_hz).round() as usize;
        let mut prev = 0.0f64;
        for half in 1..=32usize {
            let lo = 32 - half;
            let hi = 31 + half;
            let rows = vec![
                {
                    let mut r = vec![false; 64];
                    for c in lo..=hi {
                        r[c] = true;
                    }
                    r
                };
                cube.n_depth()
            ];
            let mask =
                SamplingMask::from_rows(MaskKind::FocusedChannels, rows, 2 * half, 0).unwrap();
            let out = das_focused(&cube, &probe, Some(&mask)).unwrap();
            let v = out.at(peak_d, te).abs();
            assert!(
                v + 1e-12 >= prev,
                "aperture {half}: peak {v} < previous {prev}"
            );
            prev = v;
        }
    }

    #[test]
    fn aligned_focused_sums_to_das_exactly() {
        let probe = default_probe();
        let pulse = Pulse::for_probe(&probe);
        let phantom = point_phantom(1e-3, 0.008);
        let cube = simulate_focused_frame(&phantom, &probe, &pulse, 900, 0.0).unwrap();
        let mask = make_focused_mask(cube.n_depth(), 64, 8, 3).unwrap();

        let das = das_focused(&cube, &probe, Some(&mask)).unwrap();
        let aligned = delay_align_focused(&cube, &probe, Some(&mask)).unwrap();
        for d in 0..cube.n_depth() {
            for te in 0..cube.n_events() {
                let mut s = 0.0;
                for rx in 0..64 {
                    s += aligned.at(d, rx, te);
                }
                assert_eq!(s, das.at(d, te), "d={d} te={te}");
            }
        }
    }

    #[test]
    fn planewave_compound_matches_sum_of_single_angles_and_finds_scatterer() {
        let probe = default_probe();
        let pulse = Pulse::for_probe(&probe);
        let angles = crate::sim::angle_set(7, 10f64.to_radians());
        let x = probe.element_x(100);
        let z = 0.012;
        let phantom = point_phantom(x, z);
        let cube = simulate_planewave_frame(&phantom, &probe, &pulse, &angles, 1400, 0.0).unwrap();

        let compound = das_planewave_compound(&cube, &probe, None, None).unwrap();
        let mut acc = vec![0.0f64; compound.rf_sum.len()];
        for e in 0..7 {
            let mut row = vec![false; 7];
            row[e] = true;
            let m = SamplingMask::from_rows(MaskKind::PwAngles, vec![row], 1, 0).unwrap();
            let one = das_planewave_compound(&cube, &probe, Some(&m), None).unwrap();
            for (a, v) in acc.iter_mut().zip(&one.rf_sum) {
                *a += v;
            }
        }
        for (a, b) in acc.iter().zip(&compound.rf_sum) {
            assert_eq!(a, b);
        }

        let img = envelope_log_compress(EnvelopeSource::Rf(&compound), 60.0).unwrap();
        let (pd, pl) = img.argmax();
        let expect_d =
            (2.0 * z / probe.sound_speed_m_s * probe.sampling_freq_hz).round() as i64;
        assert!((pd as i64 - expect_d).abs() <= 1);
        assert!((pl as i64 - 100).abs() <= 1);

        // Subset of a zero cube is zero.
        let zero = RFCube::zeros(
            64,
            probe.n_rx_planewave,
            7,
            0.0,
            &probe,
            EventKind::PlanewaveAngle,
            angles.clone(),
        )
        .unwrap();
        let m = crate::subsample::make_pw_subset(7, 3).unwrap();
        let out = das_planewave_compound(&zero, &probe, Some(&m), None).unwrap();
        assert!(out.rf_sum.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hilbert_cosine_has_flat_envelope_and_sine_quadrature() {
        for &n in &[64usize, 100, 257] {
            let k = 5.0;
            let signal: Vec<f64> = (0..n)
                .map(|t| (2.0 * std::f64::consts::PI * k * t as f64 / n as f64).cos())
                .collect();
            let iq = hilbert_analytic(&signal).unwrap();
            assert_eq!(iq.i, signal);
            for (t, (&i, &q)) in iq.i.iter().zip(&iq.q).enumerate() {
                let env = i.hypot(q);
                assert!((env - 1.0).abs() < 1e-9, "n={n} t={t} env={env}");
                let want_q = (2.0 * std::f64::consts::PI * k * t as f64 / n as f64).sin();
                assert!((q - want_q).abs() < 1e-9);
            }
        }
        assert!(hilbert_analytic(&[1.0]).is_err());
    }

    #[test]
    fn log_compression_examples() {
        let lines = BeamformedLines {
            rf_sum: vec![0.0; 8],
            n_depth: 4,
            lateral_positions_m: vec![0.0, 1e-3],
            depth_start_m: 0.0,
            depth_step_m: 1.925e-5,
        };
        let blank = envelope_log_compress(EnvelopeSource::Rf(&lines), 60.0).unwrap();
        assert!(blank.is_blank);
        assert!(blank.pixels().iter().all(|&v| v == -60.0));

        // Direct IQ path: known envelope ratios.
        let i = vec![1000.0, 1.0, 0.1];
        let q = vec![0.0, 0.0, 0.0];
        let img = envelope_log_compress(
            EnvelopeSource::Iq {
                i: &i,
                q: &q,
                n_depth: 3,
                n_lateral: 1,
            },
            60.0,
        )
        .unwrap();
        assert_eq!(img.at(0, 0), 0.0);
        assert_eq!(img.at(1, 0), -60.0); // ratio 1/1000 -> exactly the clamp
        assert_eq!(img.at(2, 0), -60.0);

        // Scale invariance: power-of-two scaling is exactly invariant.
        let i2: Vec<f64> = i.iter().map(|v| v * 8.0).collect();
        let img2 = envelope_log_compress(
            EnvelopeSource::Iq {
                i: &i2,
                q: &q,
                n_depth: 3,
                n_lateral: 1,
            },
            60.0,
        )
        .unwrap();
        assert_eq!(img.pixels(), img2.pixels());
    }

    #[test]
    fn envelope_is_invariant_to_sign_flip() {
        let n = 128;
        let signal: Vec<f64> = (0..n)
            .map(|t| {
                let x = t as f64 / n as f64;
                (2.0 * std::f64::consts::PI * 7.0 * x).cos() * (-4.0 * (x - 0.5).powi(2)).exp()
            })
            .collect();
        let flipped: Vec<f64> = signal.iter().map(|v| -v).collect();
        let a = hilbert_analytic(&signal).unwrap().envelope();
        let b = hilbert_analytic(&flipped).unwrap().envelope();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * x.abs().max(1e-30));
        }
    }
}
