//! Learned beamformer pipeline: builds network inputs from receive-aligned
//! RF data, supervision targets from the full-rate reference beamformer, and
//! reconstructs B-mode images from a trained network.
//!
//! Inputs are windows of three adjacent depth planes of the aligned
//! (and possibly subsampled, zero-padded) channel data; the boundary plane
//! is replicated at the first and last depth. Each window is normalized by
//! its own max absolute value and the same scale divides the target, so the
//! network learns scale-free mappings; inference multiplies the scale back.

use rayon::prelude::*;

use crate::bmode::BModeImage;
use crate::cube::RFCube;
use crate::das::{
    das_focused, das_planewave_compound, delay_align_focused, delay_align_planewave,
    envelope_log_compress, hilbert_analytic, AlignedFocused, AlignedPlanewave, BeamformedLines,
    EnvelopeSource,
};
use crate::error::Result;
use crate::nn::{Network, Tensor4, TrainSample};
use crate::probe::ProbeConfig;
use crate::subsample::SamplingMask;

/// Full-rate supervision for a focused frame: I/Q planes of the reference
/// delay-and-sum image, row-major `[depth][te]`.
#[derive(Debug, Clone)]
pub struct FocusedTargets {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub n_depth: usize,
    pub n_te: usize,
}

/// Reference DAS on the unmasked cube, Hilbert-transformed along depth per
/// scan line.
pub fn focused_frame_targets(cube: &RFCube, probe: &ProbeConfig) -> Result<FocusedTargets> {
    let lines = das_focused(cube, probe, None)?;
    let n_depth = lines.n_depth;
    let n_te = lines.n_lateral();
    let mut i = vec![0.0f64; n_depth * n_te];
    let mut q = vec![0.0f64; n_depth * n_te];
    let mut col = vec![0.0f64; n_depth];
    for te in 0..n_te {
        for d in 0..n_depth {
            col[d] = lines.at(d, te);
        }
        let iq = hilbert_analytic(&col)?;
        for d in 0..n_depth {
            i[d * n_te + te] = iq.i[d];
            q[d * n_te + te] = iq.q[d];
        }
    }
    Ok(FocusedTargets {
        i,
        q,
        n_depth,
        n_te,
    })
}

/// Full-rate supervision for a plane-wave frame: the compound DAS RF rows,
/// row-major `[depth][lateral]`.
pub fn planewave_frame_targets(cube: &RFCube, probe: &ProbeConfig) -> Result<BeamformedLines> {
    das_planewave_compound(cube, probe, None, None)
}

#[inline]
fn clamp_plane(d: i64, n_depth: usize) -> usize {
    d.clamp(0, n_depth as i64 - 1) as usize
}

/// Three-plane input window around `depth`: `[1 x 3 x n_rx x n_te]`.
pub fn focused_input_window(aligned: &AlignedFocused, depth: usize) -> Tensor4 {
    let mut x = Tensor4::zeros(1, 3, aligned.n_rx, aligned.n_te);
    for (ch, off) in [(0usize, -1i64), (1, 0), (2, 1)] {
        let src = aligned.plane(clamp_plane(depth as i64 + off, aligned.n_depth));
        x.plane_mut(0, ch).copy_from_slice(src);
    }
    x
}

/// Three-plane input window around `depth`: `[1 x 3 x n_pw x n_rx]`.
pub fn planewave_input_window(aligned: &AlignedPlanewave, depth: usize) -> Tensor4 {
    let mut x = Tensor4::zeros(1, 3, aligned.n_pw, aligned.n_rx);
    for (ch, off) in [(0usize, -1i64), (1, 0), (2, 1)] {
        let src = aligned.plane(clamp_plane(depth as i64 + off, aligned.n_depth));
        x.plane_mut(0, ch).copy_from_slice(src);
    }
    x
}

fn max_abs(t: &Tensor4) -> f64 {
    t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn normalize_in_place(x: &mut Tensor4) -> f64 {
    let scale = max_abs(x);
    let scale = if scale == 0.0 { 1.0 } else { scale };
    x.data_mut().iter_mut().for_each(|v| *v /= scale);
    scale
}

/// One focused training pair at `depth`: normalized aligned window in,
/// normalized I/Q row of the full-rate reference out.
pub fn focused_sample(
    aligned: &AlignedFocused,
    targets: &FocusedTargets,
    depth: usize,
) -> TrainSample {
    let mut input = focused_input_window(aligned, depth);
    let scale = normalize_in_place(&mut input);
    let n_te = targets.n_te;
    let mut target = Tensor4::zeros(1, 2, 1, n_te);
    for te in 0..n_te {
        *target.at_mut(0, 0, 0, te) = targets.i[depth * n_te + te] / scale;
        *target.at_mut(0, 1, 0, te) = targets.q[depth * n_te + te] / scale;
    }
    TrainSample { input, target }
}

/// One plane-wave training pair at `depth`.
pub fn planewave_sample(
    aligned: &AlignedPlanewave,
    targets: &BeamformedLines,
    depth: usize,
) -> TrainSample {
    let mut input = planewave_input_window(aligned, depth);
    let scale = normalize_in_place(&mut input);
    let n_lat = targets.n_lateral();
    let mut target = Tensor4::zeros(1, 1, 1, n_lat);
    for j in 0..n_lat {
        *target.at_mut(0, 0, 0, j) = targets.at(depth, j) / scale;
    }
    TrainSample { input, target }
}

// Runs the network over every depth plane in batches, returning the
// un-normalized output rows flattened as [depth][out_ch][w].
fn infer_planes(
    net: &Network,
    n_depth: usize,
    window_at: impl Fn(usize) -> Tensor4 + Sync,
    batch: usize,
) -> Result<Vec<Vec<f64>>> {
    let windows: Vec<(Tensor4, f64)> = (0..n_depth)
        .into_par_iter()
        .map(|d| {
            let mut x = window_at(d);
            let scale = normalize_in_place(&mut x);
            (x, scale)
        })
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_depth);
    for chunk_start in (0..n_depth).step_by(batch) {
        let chunk_end = (chunk_start + batch).min(n_depth);
        let refs: Vec<&Tensor4> = windows[chunk_start..chunk_end]
            .iter()
            .map(|(x, _)| x)
            .collect();
        let x = Tensor4::stack(&refs)?;
        let y = net.forward_eval(&x)?;
        for (bi, d) in (chunk_start..chunk_end).enumerate() {
            let scale = windows[d].1;
            let mut row = Vec::with_capacity(y.c * y.w);
            for ch in 0..y.c {
                row.extend(y.plane(bi, ch).iter().map(|v| v * scale));
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Learned reconstruction of a focused frame: align (with the mask's
/// zero-padding), run the network per depth plane, envelope the predicted
/// I/Q directly, and log-compress through the shared back end.
pub fn deepbf_focused_image(
    net: &Network,
    cube: &RFCube,
    probe: &ProbeConfig,
    mask: Option<&SamplingMask>,
    dynamic_range_db: f64,
    batch: usize,
) -> Result<BModeImage> {
    let aligned = delay_align_focused(cube, probe, mask)?;
    let n_depth = aligned.n_depth;
    let n_te = aligned.n_te;
    let rows = infer_planes(net, n_depth, |d| focused_input_window(&aligned, d), batch)?;
    let mut i = vec![0.0f64; n_depth * n_te];
    let mut q = vec![0.0f64; n_depth * n_te];
    for (d, row) in rows.iter().enumerate() {
        i[d * n_te..(d + 1) * n_te].copy_from_slice(&row[..n_te]);
        q[d * n_te..(d + 1) * n_te].copy_from_slice(&row[n_te..2 * n_te]);
    }
    envelope_log_compress(
        EnvelopeSource::Iq {
            i: &i,
            q: &q,
            n_depth,
            n_lateral: n_te,
        },
        dynamic_range_db,
    )
}

/// Learned reconstruction of a plane-wave frame; the network predicts the
/// compound RF row, so the envelope runs through the same analytic-signal
/// path as the reference beamformer.
pub fn deepbf_planewave_image(
    net: &Network,
    cube: &RFCube,
    probe: &ProbeConfig,
    pw_subset: Option<&SamplingMask>,
    channel_mask: Option<&SamplingMask>,
    dynamic_range_db: f64,
    batch: usize,
) -> Result<BModeImage> {
    let aligned = delay_align_planewave(cube, probe, pw_subset, channel_mask)?;
    let n_depth = aligned.n_depth;
    let n_rx = aligned.n_rx;
    let rows = infer_planes(net, n_depth, |d| planewave_input_window(&aligned, d), batch)?;
    let mut rf = vec![0.0f64; n_depth * n_rx];
    for (d, row) in rows.iter().enumerate() {
        rf[d * n_rx..(d + 1) * n_rx].copy_from_slice(&row[..n_rx]);
    }
    let lines = BeamformedLines {
        rf_sum: rf,
        n_depth,
        lateral_positions_m: (0..n_rx).map(|r| probe.element_x(r)).collect(),
        depth_start_m: cube.depth_start_m,
        depth_step_m: cube.depth_step_m,
    };
    envelope_log_compress(EnvelopeSource::Rf(&lines), dynamic_range_db)
}

/// Reference DAS image of a focused frame through the shared back end.
pub fn das_focused_image(
    cube: &RFCube,
    probe: &ProbeConfig,
    mask: Option<&SamplingMask>,
    dynamic_range_db: f64,
) -> Result<BModeImage> {
    let lines = das_focused(cube, probe, mask)?;
    envelope_log_compress(EnvelopeSource::Rf(&lines), dynamic_range_db)
}

/// Reference compound DAS image of a plane-wave frame.
pub fn das_planewave_image(
    cube: &RFCube,
    probe: &ProbeConfig,
    pw_subset: Option<&SamplingMask>,
    channel_mask: Option<&SamplingMask>,
    dynamic_range_db: f64,
) -> Result<BModeImage> {
    let lines = das_planewave_compound(cube, probe, pw_subset, channel_mask)?;
    envelope_log_compress(EnvelopeSource::Rf(&lines), dynamic_range_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::default_probe;
    use crate::sim::{simulate_focused_frame, Phantom, Pulse, Scatterer};
    use crate::subsample::make_focused_mask;

    fn small_frame() -> (RFCube, ProbeConfig) {
        let mut probe = default_probe();
        probe.n_te_focused = 24;
        let pulse = Pulse::for_probe(&probe);
        let phantom = Phantom {
            scatterers: vec![
                Scatterer {
                    x_m: 0.0,
                    z_m: 0.006,
                    reflectivity: 1.0,
                },
                Scatterer {
                    x_m: -1e-3,
                    z_m: 0.008,
                    reflectivity: -0.7,
                },
            ],
            x_min_m: -0.02,
            x_max_m: 0.02,
            z_min_m: 1e-4,
            z_max_m: 0.05,
            cysts: vec![],
        };
        let cube = simulate_focused_frame(&phantom, &probe, &pulse, 512, 0.003).unwrap();
        (cube, probe)
    }

    #[test]
    fn windows_replicate_boundary_planes() {
        let (cube, probe) = small_frame();
        let aligned = delay_align_focused(&cube, &probe, None).unwrap();
        let first = focused_input_window(&aligned, 0);
        assert_eq!(first.plane(0, 0), first.plane(0, 1));
        let last = focused_input_window(&aligned, aligned.n_depth - 1);
        assert_eq!(last.plane(0, 1), last.plane(0, 2));
        let mid = focused_input_window(&aligned, 5);
        assert_eq!(mid.plane(0, 0), aligned.plane(4));
        assert_eq!(mid.plane(0, 1), aligned.plane(5));
        assert_eq!(mid.plane(0, 2), aligned.plane(6));
    }

    #[test]
    fn samples_are_normalized_consistently() {
        let (cube, probe) = small_frame();
        let aligned = delay_align_focused(&cube, &probe, None).unwrap();
        let targets = focused_frame_targets(&cube, &probe).unwrap();
        let depth = 300;
        let s = focused_sample(&aligned, &targets, depth);
        let max_in = s.input.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((max_in - 1.0).abs() < 1e-12);

        // Undoing the normalization recovers the raw target row.
        let raw = focused_input_window(&aligned, depth);
        let scale = raw.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let n_te = targets.n_te;
        for te in 0..n_te {
            let want = targets.i[depth * n_te + te];
            let got = s.input.at(0, 0, 0, 0) * 0.0 + s.target.at(0, 0, 0, te) * scale;
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn deepbf_image_has_expected_geometry() {
        let (cube, probe) = small_frame();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let net = crate::nn::build_contracting(
            crate::nn::Variant::Focused,
            3,
            64,
            2,
            2,
            2,
            &mut rng,
        );
        let mask = make_focused_mask(cube.n_depth(), 64, 16, 1).unwrap();
        let img =
            deepbf_focused_image(&net, &cube, &probe, Some(&mask), 60.0, 64).unwrap();
        assert_eq!(img.n_depth(), cube.n_depth());
        assert_eq!(img.n_lateral(), 24);
    }
}
