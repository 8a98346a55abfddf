//! Dataset access and the shared pipeline pieces the commands compose:
//! seeded mask derivation, training-set assembly, evaluation, and the
//! inference benchmark.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use usbf_core::deepbf::{
    das_focused_image, das_planewave_image, deepbf_focused_image, deepbf_planewave_image,
    focused_frame_targets, focused_sample, planewave_frame_targets, planewave_sample,
};
use usbf_core::nn::{Network, TrainSample, Variant};
use usbf_core::{
    cyst_rois, delay_align_focused, delay_align_planewave, make_focused_mask, BModeImage,
    ProbeConfig, RFCube, Roi, SamplingMask,
};

use crate::config::{focused_factor_to_keep, planewave_factor_to_keep, TrainSection};
use crate::manifest::{DatasetManifest, FrameEntry, Split};
use crate::report::MetricRow;
use crate::rfio;

pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub probe: ProbeConfig,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        let probe = manifest.probe.to_probe();
        probe.validate()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            probe,
        })
    }

    pub fn load_frame(&self, frame: &FrameEntry) -> Result<RFCube> {
        rfio::read_cube(&self.dir.join(&frame.file), &self.manifest, &self.probe)
    }

    pub fn is_focused(&self) -> bool {
        self.manifest.mode == "focused"
    }

    pub fn variant(&self) -> Variant {
        if self.is_focused() {
            Variant::Focused
        } else {
            Variant::Planewave
        }
    }
}

/// SplitMix64 chain: a stable per-(frame, factor, ...) seed derivation.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = base;
    for &t in tags {
        s = s.wrapping_add(0x9E3779B97F4A7C15).wrapping_add(t);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        s = z ^ (z >> 31);
    }
    s
}

/// Channel mask for one (frame, factor) pair; `None` at factor 1 (full
/// rate). The keep count is part of the seed so factors draw distinct
/// patterns.
pub fn channel_mask_for(
    dataset: &Dataset,
    factor: f64,
    mask_seed: u64,
    frame_id: usize,
) -> Result<Option<SamplingMask>> {
    let n_rx = dataset.manifest.rx_per_event();
    let keep = if dataset.is_focused() {
        focused_factor_to_keep(factor)?
    } else {
        planewave_factor_to_keep(factor)?
    };
    if keep == n_rx {
        return Ok(None);
    }
    let seed = derive_seed(mask_seed, &[frame_id as u64, keep as u64]);
    Ok(Some(make_focused_mask(
        dataset.manifest.n_depth,
        n_rx,
        keep,
        seed,
    )?))
}

/// Reconstructs one frame with the requested method. For plane-wave
/// datasets `factor` subsamples channels and `pw_subset` selects angles.
#[allow(clippy::too_many_arguments)]
pub fn frame_image(
    dataset: &Dataset,
    cube: &RFCube,
    frame_id: usize,
    method: &str,
    factor: f64,
    mask_seed: u64,
    pw_subset: Option<&SamplingMask>,
    net: Option<&Network>,
    dynamic_range_db: f64,
) -> Result<BModeImage> {
    let mask = channel_mask_for(dataset, factor, mask_seed, frame_id)?;
    let img = match (method, dataset.is_focused()) {
        ("das", true) => das_focused_image(cube, &dataset.probe, mask.as_ref(), dynamic_range_db)?,
        ("das", false) => das_planewave_image(
            cube,
            &dataset.probe,
            pw_subset,
            mask.as_ref(),
            dynamic_range_db,
        )?,
        ("deepbf", true) => {
            let net = net.context("deepbf requires a checkpoint")?;
            deepbf_focused_image(net, cube, &dataset.probe, mask.as_ref(), dynamic_range_db, 64)?
        }
        ("deepbf", false) => {
            let net = net.context("deepbf requires a checkpoint")?;
            deepbf_planewave_image(
                net,
                cube,
                &dataset.probe,
                pw_subset,
                mask.as_ref(),
                dynamic_range_db,
                64,
            )?
        }
        (m, _) => anyhow::bail!("unknown method {m:?} (use das or deepbf)"),
    };
    Ok(img)
}

/// Builds the supervised set for one split: per frame, `planes_per_frame`
/// random depth planes, each paired with a subsampling factor drawn
/// uniformly from `train.factors` (the universal-model mix).
pub fn build_samples(
    dataset: &Dataset,
    split: Split,
    train: &TrainSection,
    mask_seed: u64,
) -> Result<Vec<TrainSample>> {
    let frames = dataset.manifest.frames_in(split);
    let mut samples = Vec::new();
    for frame in frames {
        let cube = dataset.load_frame(frame)?;
        let n_depth = cube.n_depth();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            train.seed,
            &[frame.id as u64, 0xDA7A],
        ));
        let mut planes: Vec<usize> = (0..n_depth).collect();
        planes.shuffle(&mut rng);
        planes.truncate(train.planes_per_frame.min(n_depth));
        planes.sort_unstable();
        let factor_of: Vec<f64> = planes
            .iter()
            .map(|_| train.factors[rng.gen_range(0..train.factors.len())])
            .collect();

        if dataset.is_focused() {
            let targets = focused_frame_targets(&cube, &dataset.probe)?;
            for f in &train.factors {
                let here: Vec<usize> = planes
                    .iter()
                    .zip(&factor_of)
                    .filter(|(_, ff)| *ff == f)
                    .map(|(p, _)| *p)
                    .collect();
                if here.is_empty() {
                    continue;
                }
                let mask = channel_mask_for(dataset, *f, mask_seed, frame.id)?;
                let aligned = delay_align_focused(&cube, &dataset.probe, mask.as_ref())?;
                for p in here {
                    samples.push(focused_sample(&aligned, &targets, p));
                }
            }
        } else {
            let targets = planewave_frame_targets(&cube, &dataset.probe)?;
            for f in &train.factors {
                let here: Vec<usize> = planes
                    .iter()
                    .zip(&factor_of)
                    .filter(|(_, ff)| *ff == f)
                    .map(|(p, _)| *p)
                    .collect();
                if here.is_empty() {
                    continue;
                }
                let mask = channel_mask_for(dataset, *f, mask_seed, frame.id)?;
                let aligned =
                    delay_align_planewave(&cube, &dataset.probe, None, mask.as_ref())?;
                for p in here {
                    samples.push(planewave_sample(&aligned, &targets, p));
                }
            }
        }
    }
    Ok(samples)
}

/// ROIs for the first cyst of a frame, in the image's coordinates.
pub fn frame_rois(dataset: &Dataset, frame: &FrameEntry) -> Result<Option<(Roi, Roi)>> {
    let Some(cyst) = frame.cysts.first() else {
        return Ok(None);
    };
    let lateral: Vec<f64> = if dataset.is_focused() {
        (0..dataset.probe.n_te_focused)
            .map(|te| dataset.probe.scan_line_x(te))
            .collect()
    } else {
        (0..dataset.probe.n_rx_planewave)
            .map(|r| dataset.probe.element_x(r))
            .collect()
    };
    Ok(Some(cyst_rois(
        cyst.x_m,
        cyst.z_m,
        cyst.radius_m,
        dataset.manifest.depth_start_m,
        dataset.probe.depth_step_m(),
        &lateral,
    )?))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-(factor, method) metric summary over the test split. PSNR/SSIM are
/// referenced to each frame's full-rate DAS image; CNR/GCNR use the
/// manifest's cyst ROIs when present.
pub fn evaluate(
    dataset: &Dataset,
    net: &Network,
    factors: &[f64],
    mask_seed: u64,
    dynamic_range_db: f64,
    split: Split,
) -> Result<Vec<MetricRow>> {
    let frames = dataset.manifest.frames_in(split);
    if frames.is_empty() {
        anyhow::bail!("dataset has no frames in the {split:?} split");
    }
    let mut rows = Vec::new();
    let mut missing_rois = false;

    struct FrameCtx {
        cube: RFCube,
        reference: BModeImage,
        rois: Option<(Roi, Roi)>,
        id: usize,
    }
    let mut ctxs = Vec::new();
    for frame in &frames {
        let cube = dataset.load_frame(frame)?;
        let reference = if dataset.is_focused() {
            das_focused_image(&cube, &dataset.probe, None, dynamic_range_db)?
        } else {
            das_planewave_image(&cube, &dataset.probe, None, None, dynamic_range_db)?
        };
        let rois = frame_rois(dataset, frame)?;
        if rois.is_none() {
            missing_rois = true;
        }
        ctxs.push(FrameCtx {
            cube,
            reference,
            rois,
            id: frame.id,
        });
    }
    if missing_rois {
        eprintln!("warning: frames without cyst ROIs; CNR/GCNR columns left empty");
    }

    for &factor in factors {
        for method in ["das", "deepbf"] {
            let mut psnrs = Vec::new();
            let mut ssims = Vec::new();
            let mut cnrs = Vec::new();
            let mut gcnrs = Vec::new();
            for ctx in &ctxs {
                let img = frame_image(
                    dataset,
                    &ctx.cube,
                    ctx.id,
                    method,
                    factor,
                    mask_seed,
                    None,
                    Some(net),
                    dynamic_range_db,
                )?;
                psnrs.push(usbf_core::psnr(&ctx.reference, &img)?);
                ssims.push(usbf_core::ssim(&ctx.reference, &img)?);
                if let Some((target, background)) = &ctx.rois {
                    cnrs.push(usbf_core::cnr(&img, target, background)?);
                    gcnrs.push(usbf_core::gcnr(&img, target, background, 256)?);
                }
            }
            rows.push(MetricRow {
                factor,
                method: method.into(),
                cnr: (!cnrs.is_empty()).then(|| mean(&cnrs)),
                gcnr: (!gcnrs.is_empty()).then(|| mean(&gcnrs)),
                psnr: mean(&psnrs),
                ssim: mean(&ssims),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub planes: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub batched_mean_ms: f64,
    pub single_throughput_per_s: f64,
    pub batched_throughput_per_s: f64,
}

/// Times per-depth-plane inference on one frame: individually and in
/// batches of `batch` planes.
pub fn bench_inference(
    dataset: &Dataset,
    net: &Network,
    n_planes: usize,
    batch: usize,
) -> Result<BenchReport> {
    let frame = dataset
        .manifest
        .frames_in(Split::Test)
        .first()
        .copied()
        .or_else(|| dataset.manifest.frames.first())
        .context("empty dataset")?
        .clone();
    let cube = dataset.load_frame(&frame)?;

    use usbf_core::deepbf::{focused_input_window, planewave_input_window};
    use usbf_core::nn::Tensor4;
    enum Aligned {
        F(usbf_core::AlignedFocused),
        P(usbf_core::AlignedPlanewave),
    }
    let aligned = if dataset.is_focused() {
        Aligned::F(delay_align_focused(&cube, &dataset.probe, None)?)
    } else {
        Aligned::P(delay_align_planewave(&cube, &dataset.probe, None, None)?)
    };
    let window = |d: usize| -> Tensor4 {
        match &aligned {
            Aligned::F(a) => focused_input_window(a, d % a.n_depth),
            Aligned::P(a) => planewave_input_window(a, d % a.n_depth),
        }
    };

    // Warmup.
    for d in 0..3 {
        let _ = net.forward_eval(&window(d))?;
    }

    let mut times_ms = Vec::with_capacity(n_planes);
    for d in 0..n_planes {
        let x = window(d);
        let t0 = Instant::now();
        let _ = net.forward_eval(&x)?;
        times_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = times_ms.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median_ms = sorted[sorted.len() / 2];
    let p95_ms = sorted[(sorted.len() as f64 * 0.95) as usize - 1];
    let mean_ms = mean(&times_ms);

    let mut batched_total_s = 0.0;
    let mut batched_planes = 0usize;
    for start in (0..n_planes).step_by(batch) {
        let end = (start + batch).min(n_planes);
        let windows: Vec<Tensor4> = (start..end).map(window).collect();
        let refs: Vec<&Tensor4> = windows.iter().collect();
        let x = Tensor4::stack(&refs)?;
        let t0 = Instant::now();
        let _ = net.forward_eval(&x)?;
        batched_total_s += t0.elapsed().as_secs_f64();
        batched_planes += end - start;
    }
    let batched_mean_ms = batched_total_s * 1e3 / batched_planes as f64;

    Ok(BenchReport {
        planes: n_planes,
        mean_ms,
        median_ms,
        p95_ms,
        batched_mean_ms,
        single_throughput_per_s: 1e3 / mean_ms,
        batched_throughput_per_s: 1e3 / batched_mean_ms,
    })
}
