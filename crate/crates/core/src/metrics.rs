//! Image-quality metrics on B-mode images: CNR, GCNR, PSNR, SSIM, and the
//! region-of-interest definitions they operate on.
//!
//! All metrics are pure functions of the dB pixel values.

use crate::bmode::BModeImage;
use crate::error::{CoreError, Result};

/// Region of interest in image coordinates (depth index, lateral index).
///
/// `Ellipse`/`Annulus` carry per-axis radii so physically circular regions
/// stay circular on the anisotropic depth/lateral grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Roi {
    Disk {
        center_depth: f64,
        center_lateral: f64,
        radius: f64,
    },
    Rect {
        depth_range: (usize, usize),
        lateral_range: (usize, usize),
    },
    Ellipse {
        center_depth: f64,
        center_lateral: f64,
        radius_depth: f64,
        radius_lateral: f64,
    },
    Annulus {
        center_depth: f64,
        center_lateral: f64,
        inner_depth: f64,
        inner_lateral: f64,
        outer_depth: f64,
        outer_lateral: f64,
    },
}

impl Roi {
    /// Pixel set of the region, validated against the image bounds.
    pub fn pixels(&self, n_depth: usize, n_lateral: usize) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        match *self {
            Roi::Disk {
                center_depth,
                center_lateral,
                radius,
            } => {
                collect_ellipse(
                    center_depth,
                    center_lateral,
                    radius,
                    radius,
                    n_depth,
                    n_lateral,
                    &mut out,
                );
            }
            Roi::Ellipse {
                center_depth,
                center_lateral,
                radius_depth,
                radius_lateral,
            } => {
                collect_ellipse(
                    center_depth,
                    center_lateral,
                    radius_depth,
                    radius_lateral,
                    n_depth,
                    n_lateral,
                    &mut out,
                );
            }
            Roi::Rect {
                depth_range,
                lateral_range,
            } => {
                if depth_range.1 > n_depth || lateral_range.1 > n_lateral {
                    return Err(CoreError::InvalidArgument(
                        "rect ROI outside image bounds".into(),
                    ));
                }
                for d in depth_range.0..depth_range.1 {
                    for l in lateral_range.0..lateral_range.1 {
                        out.push((d, l));
                    }
                }
            }
            Roi::Annulus {
                center_depth,
                center_lateral,
                inner_depth,
                inner_lateral,
                outer_depth,
                outer_lateral,
            } => {
                let mut outer = Vec::new();
                collect_ellipse(
                    center_depth,
                    center_lateral,
                    outer_depth,
                    outer_lateral,
                    n_depth,
                    n_lateral,
                    &mut outer,
                );
                for (d, l) in outer {
                    let nd = (d as f64 - center_depth) / inner_depth;
                    let nl = (l as f64 - center_lateral) / inner_lateral;
                    if nd * nd + nl * nl > 1.0 {
                        out.push((d, l));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(CoreError::Degenerate("ROI selects no pixels".into()));
        }
        Ok(out)
    }
}

fn collect_ellipse(
    cd: f64,
    cl: f64,
    rd: f64,
    rl: f64,
    n_depth: usize,
    n_lateral: usize,
    out: &mut Vec<(usize, usize)>,
) {
    let d_min = (cd - rd).floor().max(0.0) as usize;
    let d_max = ((cd + rd).ceil() as usize).min(n_depth.saturating_sub(1));
    let l_min = (cl - rl).floor().max(0.0) as usize;
    let l_max = ((cl + rl).ceil() as usize).min(n_lateral.saturating_sub(1));
    for d in d_min..=d_max.min(n_depth.saturating_sub(1)) {
        for l in l_min..=l_max {
            let nd = (d as f64 - cd) / rd;
            let nl = (l as f64 - cl) / rl;
            if nd * nd + nl * nl <= 1.0 {
                out.push((d, l));
            }
        }
    }
}

fn roi_values(image: &BModeImage, roi: &Roi, min_pixels: usize) -> Result<Vec<f64>> {
    let px = roi.pixels(image.n_depth(), image.n_lateral())?;
    if px.len() < min_pixels {
        return Err(CoreError::Degenerate(format!(
            "ROI has {} pixels, need at least {min_pixels}",
            px.len()
        )));
    }
    Ok(px.iter().map(|&(d, l)| image.at(d, l)).collect())
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Contrast-to-noise ratio between target and background ROIs, computed on
/// the dB pixels: `|mu_t - mu_b| / sqrt(var_t + var_b)` (population
/// variances).
pub fn cnr(image: &BModeImage, target: &Roi, background: &Roi) -> Result<f64> {
    let t = roi_values(image, target, 16)?;
    let b = roi_values(image, background, 16)?;
    let (mt, vt) = mean_var(&t);
    let (mb, vb) = mean_var(&b);
    if vt + vb == 0.0 {
        return Err(CoreError::Degenerate(
            "both ROIs have zero variance".into(),
        ));
    }
    Ok((mt - mb).abs() / (vt + vb).sqrt())
}

/// Generalized CNR: one minus the overlap of the two ROIs' pixel-value
/// histograms over a shared bin grid spanning both ROIs. Bounded in [0, 1].
pub fn gcnr(image: &BModeImage, target: &Roi, background: &Roi, n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(CoreError::InvalidArgument("n_bins must be nonzero".into()));
    }
    let t = roi_values(image, target, 16)?;
    let b = roi_values(image, background, 16)?;
    Ok(gcnr_from_values(&t, &b, n_bins))
}

/// Histogram-overlap GCNR on raw value sets (shared uniform bin grid over
/// the pooled range).
pub fn gcnr_from_values(target: &[f64], background: &[f64], n_bins: usize) -> f64 {
    let lo = target
        .iter()
        .chain(background)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = target
        .iter()
        .chain(background)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Every value falls in one bin for both ROIs: full overlap.
        return 0.0;
    }
    let bin_of = |v: f64| -> usize {
        let k = ((v - lo) / (hi - lo) * n_bins as f64).floor() as usize;
        k.min(n_bins - 1)
    };
    let mut ht = vec![0u64; n_bins];
    let mut hb = vec![0u64; n_bins];
    for &v in target {
        ht[bin_of(v)] += 1;
    }
    for &v in background {
        hb[bin_of(v)] += 1;
    }
    // Exact integer arithmetic: min(a/nt, b/nb) = min(a*nb, b*nt)/(nt*nb),
    // so identical multisets overlap to exactly 1.
    let nt = target.len() as u64;
    let nb = background.len() as u64;
    let scaled: u64 = ht.iter().zip(&hb).map(|(&a, &b)| (a * nb).min(b * nt)).sum();
    1.0 - scaled as f64 / (nt * nb) as f64
}

/// Peak signal-to-noise ratio in dB, with the peak fixed to the dynamic
/// range so identical images give +infinity.
pub fn psnr(reference: &BModeImage, test: &BModeImage) -> Result<f64> {
    if reference.n_depth() != test.n_depth() || reference.n_lateral() != test.n_lateral() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{}x{}", reference.n_depth(), reference.n_lateral()),
            got: format!("{}x{}", test.n_depth(), test.n_lateral()),
            context: "psnr".into(),
        });
    }
    let n = reference.pixels().len() as f64;
    let mse = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.dynamic_range_db;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean local structural similarity with an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, and L equal to the dynamic range.
/// Windows are evaluated where they fit entirely inside the image.
pub fn ssim(reference: &BModeImage, test: &BModeImage) -> Result<f64> {
    const WIN: usize = 11;
    const SIGMA: f64 = 1.5;
    const K1: f64 = 0.01;
    const K2: f64 = 0.03;

    if reference.n_depth() != test.n_depth() || reference.n_lateral() != test.n_lateral() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{}x{}", reference.n_depth(), reference.n_lateral()),
            got: format!("{}x{}", test.n_depth(), test.n_lateral()),
            context: "ssim".into(),
        });
    }
    let (h, w) = (reference.n_depth(), reference.n_lateral());
    if h < WIN || w < WIN {
        return Err(CoreError::InvalidArgument(format!(
            "ssim needs at least {WIN}x{WIN} pixels, got {h}x{w}"
        )));
    }

    let mut kernel = [0.0f64; WIN];
    let mid = (WIN / 2) as f64;
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *k = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }

    let l = reference.dynamic_range_db;
    let c1 = (K1 * l) * (K1 * l);
    let c2 = (K2 * l) * (K2 * l);

    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut wbuf = [0.0f64; WIN * WIN];
    for wy in 0..WIN {
        for wx in 0..WIN {
            wbuf[wy * WIN + wx] = kernel[wy] * kernel[wx];
        }
    }

    for y0 in 0..=(h - WIN) {
        for x0 in 0..=(w - WIN) {
            let mut mx = 0.0;
            let mut my = 0.0;
            for wy in 0..WIN {
                for wx in 0..WIN {
                    let wgt = wbuf[wy * WIN + wx];
                    mx += wgt * reference.at(y0 + wy, x0 + wx);
                    my += wgt * test.at(y0 + wy, x0 + wx);
                }
            }
            let mut vx = 0.0;
            let mut vy = 0.0;
            let mut cov = 0.0;
            for wy in 0..WIN {
                for wx in 0..WIN {
                    let wgt = wbuf[wy * WIN + wx];
                    let a = reference.at(y0 + wy, x0 + wx) - mx;
                    let b = test.at(y0 + wy, x0 + wx) - my;
                    vx += wgt * a * a;
                    vy += wgt * b * b;
                    cov += wgt * a * b;
                }
            }
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Target and background ROIs for a circular cyst, in image coordinates.
///
/// The target is the cyst interior at 0.8 of the radius; the background is a
/// concentric equal-area ring starting at 1.2 radii, both converted through
/// the image's physical axis spacing.
pub fn cyst_rois(
    cyst_x_m: f64,
    cyst_z_m: f64,
    cyst_radius_m: f64,
    depth_start_m: f64,
    depth_step_m: f64,
    lateral_positions_m: &[f64],
) -> Result<(Roi, Roi)> {
    if lateral_positions_m.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "need at least two lateral positions".into(),
        ));
    }
    let lateral_step = lateral_positions_m[1] - lateral_positions_m[0];
    if !(lateral_step > 0.0) {
        return Err(CoreError::InvalidArgument(
            "lateral positions must be increasing".into(),
        ));
    }
    let center_depth = (cyst_z_m - depth_start_m) / depth_step_m;
    let center_lateral = (cyst_x_m - lateral_positions_m[0]) / lateral_step;
    let to_idx = |r_m: f64| (r_m / depth_step_m, r_m / lateral_step);

    let (trd, trl) = to_idx(0.8 * cyst_radius_m);
    let target = Roi::Ellipse {
        center_depth,
        center_lateral,
        radius_depth: trd,
        radius_lateral: trl,
    };

    // Equal area ring: inner 1.2 r, outer sqrt(1.2^2 + 0.8^2) r.
    let inner = 1.2 * cyst_radius_m;
    let outer = (1.2f64 * 1.2 + 0.8 * 0.8).sqrt() * cyst_radius_m;
    let (ird, irl) = to_idx(inner);
    let (ord_, orl) = to_idx(outer);
    let background = Roi::Annulus {
        center_depth,
        center_lateral,
        inner_depth: ird,
        inner_lateral: irl,
        outer_depth: ord_,
        outer_lateral: orl,
    };
    Ok((target, background))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_from(rows: Vec<Vec<f64>>) -> BModeImage {
        let n_depth = rows.len();
        let n_lateral = rows[0].len();
        let pixels: Vec<f64> = rows.into_iter().flatten().collect();
        BModeImage::from_pixels(pixels, n_depth, n_lateral, 60.0, false).unwrap()
    }

    fn two_region_image(target_vals: &[f64], background_vals: &[f64]) -> (BModeImage, Roi, Roi) {
        // 8x8 image: top half target pattern, bottom half background pattern.
        let mut rows = Vec::new();
        for d in 0..8 {
            let src = if d < 4 { target_vals } else { background_vals };
            rows.push((0..8).map(|l| src[(d * 8 + l) % src.len()]).collect());
        }
        let img = image_from(rows);
        let target = Roi::Rect {
            depth_range: (0, 4),
            lateral_range: (0, 8),
        };
        let background = Roi::Rect {
            depth_range: (4, 8),
            lateral_range: (0, 8),
        };
        (img, target, background)
    }

    #[test]
    fn cnr_hand_value_and_shift_invariance() {
        // Target alternates 0/-12: mean -6, sigma 6. Background -24/-36:
        // mean -30, sigma 6. CNR = 24 / sqrt(72).
        let (img, t, b) = two_region_image(&[0.0, -12.0], &[-24.0, -36.0]);
        let v = cnr(&img, &t, &b).unwrap();
        assert!((v - 24.0 / 72f64.sqrt()).abs() < 1e-12);
        assert!((v - 2.828).abs() < 1e-3);

        // Adding a constant to every pixel leaves CNR unchanged.
        let shifted: Vec<f64> = img.pixels().iter().map(|p| p - 5.0).collect();
        let img2 = BModeImage::from_pixels(shifted, 8, 8, 60.0, false).unwrap();
        assert!((cnr(&img2, &t, &b).unwrap() - v).abs() < 1e-12);

        // Identical statistics give zero.
        let (img3, t3, b3) = two_region_image(&[-10.0, -20.0], &[-10.0, -20.0]);
        assert_eq!(cnr(&img3, &t3, &b3).unwrap(), 0.0);

        // Degenerate: both ROIs constant.
        let (img4, t4, b4) = two_region_image(&[-10.0], &[-10.0]);
        assert!(cnr(&img4, &t4, &b4).is_err());
    }

    #[test]
    fn gcnr_extremes_and_hand_overlap() {
        // Identical multisets: zero.
        let (img, t, b) = two_region_image(&[-5.0, -15.0, -25.0, -35.0], &[-35.0, -25.0, -15.0, -5.0]);
        assert_eq!(gcnr(&img, &t, &b, 256).unwrap(), 0.0);

        // Fully disjoint supports: one.
        let (img2, t2, b2) = two_region_image(&[0.0, -10.0], &[-40.0, -50.0]);
        assert_eq!(gcnr(&img2, &t2, &b2, 256).unwrap(), 1.0);

        // Hand-computed overlap 0.4 -> 0.6: values on a coarse two-bin grid.
        // Target: 80% low, 20% high. Background: 40% low, 60% high.
        // Overlap = min(.8,.4) + min(.2,.6) = 0.6 -> gcnr 0.4.
        let t_vals: Vec<f64> = (0..40)
            .map(|i| if i < 32 { -50.0 } else { -1.0 })
            .collect();
        let b_vals: Vec<f64> = (0..40)
            .map(|i| if i < 16 { -50.0 } else { -1.0 })
            .collect();
        let g = gcnr_from_values(&t_vals, &b_vals, 2);
        assert!((g - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gcnr_depends_only_on_pixel_multisets() {
        // Shuffling pixels within the ROIs leaves GCNR unchanged (it sees
        // histograms, not positions).
        let vals: Vec<f64> = (0..32).map(|i| -(i as f64) * 1.7 - 3.0).collect();
        let rev: Vec<f64> = vals.iter().rev().copied().collect();
        let a = gcnr_from_values(&vals, &rev, 64);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn psnr_examples() {
        let (img, ..) = two_region_image(&[0.0, -12.0], &[-24.0, -36.0]);
        assert_eq!(psnr(&img, &img).unwrap(), f64::INFINITY);

        // Uniform error of DR/10 = 6 dB on DR = 60 -> 20 dB.
        let shifted: Vec<f64> = img.pixels().iter().map(|p| p - 6.0).collect();
        let img2 = BModeImage::from_pixels(shifted, 8, 8, 60.0, false).unwrap();
        let p = psnr(&img, &img2).unwrap();
        assert!((p - 20.0).abs() < 1e-12);
        assert_eq!(p, psnr(&img2, &img).unwrap());

        // More noise, lower PSNR.
        let worse: Vec<f64> = img.pixels().iter().map(|p| p - 12.0).collect();
        let img3 = BModeImage::from_pixels(worse, 8, 8, 60.0, false).unwrap();
        assert!(psnr(&img, &img3).unwrap() < p);

        let small = BModeImage::from_pixels(vec![0.0], 1, 1, 60.0, false).unwrap();
        assert!(psnr(&img, &small).is_err());
    }

    fn textured(n: usize, f: impl Fn(usize, usize) -> f64) -> BModeImage {
        let mut px = Vec::with_capacity(n * n);
        for d in 0..n {
            for l in 0..n {
                px.push(f(d, l).clamp(-60.0, 0.0));
            }
        }
        BModeImage::from_pixels(px, n, n, 60.0, false).unwrap()
    }

    #[test]
    fn ssim_identity_inversion_and_noise_monotonicity() {
        let img = textured(16, |d, l| {
            -30.0 + 15.0 * ((d as f64 * 0.7).sin() + (l as f64 * 1.3).cos())
        });
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);

        // Inversion about the mean flips structure.
        let mean = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
        let inv: Vec<f64> = img
            .pixels()
            .iter()
            .map(|p| (2.0 * mean - p).clamp(-60.0, 0.0))
            .collect();
        let inv_img = BModeImage::from_pixels(inv, 16, 16, 60.0, false).unwrap();
        assert!(ssim(&img, &inv_img).unwrap() < 0.0);

        // SSIM approaches 1 monotonically as a fixed perturbation shrinks.
        let noise: Vec<f64> = (0..256)
            .map(|i| ((i * 2654435761usize) % 97) as f64 / 97.0 - 0.5)
            .collect();
        let mut prev = -1.0;
        for &eps in &[8.0, 4.0, 2.0, 1.0, 0.5, 0.25] {
            let px: Vec<f64> = img
                .pixels()
                .iter()
                .zip(&noise)
                .map(|(p, n)| (p + eps * n).clamp(-60.0, 0.0))
                .collect();
            let noisy = BModeImage::from_pixels(px, 16, 16, 60.0, false).unwrap();
            let s = ssim(&img, &noisy).unwrap();
            assert!(s > prev, "eps {eps}: {s} <= {prev}");
            prev = s;
        }
        assert!((prev - 1.0).abs() < 1e-3);

        let tiny = textured(10, |_, _| -10.0);
        assert!(ssim(&tiny, &tiny).is_err());
    }

    #[test]
    fn cyst_rois_are_disjoint_and_sized() {
        let lateral: Vec<f64> = (0..48).map(|i| (i as f64 - 23.5) * 4e-4).collect();
        let (t, b) = cyst_rois(0.0, 0.010, 1.5e-3, 0.004, 1.925e-5, &lateral).unwrap();
        let tp = t.pixels(600, 48).unwrap();
        let bp = b.pixels(600, 48).unwrap();
        assert!(tp.len() >= 16);
        assert!(bp.len() >= 16);
        for p in &tp {
            assert!(!bp.contains(p));
        }
        // Equal-area ring: pixel counts within ~20% of each other.
        let ratio = tp.len() as f64 / bp.len() as f64;
        assert!(ratio > 0.7 && ratio < 1.4, "ratio {ratio}");
    }
}
