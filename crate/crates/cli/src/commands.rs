//! The CLI subcommands. Each command is a plain function over a clap-derive
//! args struct so tests can drive them directly.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use usbf_core::nn::{build_for_input, TrainConfig};
use usbf_core::{
    add_noise, angle_set, make_cyst_phantom, make_pw_subset, simulate_focused_frame,
    simulate_planewave_frame, CystSpec, Pulse,
};

use crate::config::Config;
use crate::dataset::{bench_inference, build_samples, channel_mask_for, derive_seed, evaluate, frame_image, frame_rois, Dataset};
use crate::manifest::{CystEntry, DatasetManifest, FrameEntry, Split, MANIFEST_VERSION};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::report::{write_loss_csv, write_metrics_csv, LossRow};
use crate::{maskio, pgm, rfio};

/// Guards a directory against concurrent writers for the command's
/// lifetime.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".usbf-lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                anyhow::bail!(
                    "{} is locked by another command (stale? remove {})",
                    dir.display(),
                    path.display()
                )
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (TOML); defaults reproduce the stock setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    simulate_dataset(&cfg, &args.out)
}

/// Simulates `cfg.sim.n_frames` phantoms and writes the RF blobs plus the
/// manifest. Fully deterministic in the config seeds.
pub fn simulate_dataset(cfg: &Config, out: &Path) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    let probe = cfg.probe.to_probe();
    probe.validate()?;
    let mut pulse = Pulse::new(probe.carrier_freq_hz, cfg.pulse.fractional_bandwidth)?;
    pulse.cutoff_sigmas = cfg.pulse.cutoff_sigmas;

    let focused = cfg.sim.mode == "focused";
    let angles = if focused {
        Vec::new()
    } else {
        angle_set(probe.n_planewaves, cfg.sim.max_angle_deg.to_radians())
    };

    let span = cfg.sim.n_depth as f64 * probe.depth_step_m();
    let z0 = cfg.sim.depth_start_m;
    let ph = &cfg.phantom;
    let z_min = (z0 - ph.z_pad_m).max(1e-4);
    let z_max = z0 + span + ph.z_pad_m;

    let n = cfg.sim.n_frames;
    let n_train = (n as f64 * cfg.split.train_frac).floor() as usize;
    let n_val = (n as f64 * cfg.split.val_frac).floor() as usize;

    let mut frames = Vec::with_capacity(n);
    for id in 0..n {
        let mut cyst_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.sim.seed, &[id as u64, 0xC457]));
        let cysts: Vec<CystSpec> = (0..ph.n_cysts)
            .map(|_| CystSpec {
                center_x_m: cyst_rng.gen_range(-ph.cyst_x_max_m..=ph.cyst_x_max_m),
                center_z_m: z0 + span * cyst_rng.gen_range(ph.cyst_z_lo_frac..=ph.cyst_z_hi_frac),
                radius_m: cyst_rng.gen_range(ph.cyst_radius_min_m..=ph.cyst_radius_max_m),
                interior_scale: ph.cyst_interior_scale,
            })
            .collect();
        let phantom_seed = derive_seed(cfg.sim.seed, &[id as u64]);
        let phantom = make_cyst_phantom(
            -ph.x_half_extent_m,
            ph.x_half_extent_m,
            z_min,
            z_max,
            ph.density_per_m2,
            &cysts,
            phantom_seed,
        )?;
        let mut cube = if focused {
            simulate_focused_frame(&phantom, &probe, &pulse, cfg.sim.n_depth, z0)?
        } else {
            simulate_planewave_frame(&phantom, &probe, &pulse, &angles, cfg.sim.n_depth, z0)?
        };
        if let Some(snr) = cfg.sim.noise_snr_db {
            add_noise(&mut cube, snr, derive_seed(cfg.sim.seed, &[id as u64, 0x7015]));
        }
        let file = format!("frame_{id:04}.rf");
        let bytes = rfio::write_cube(&cube, &out.join(&file))?;
        let split = if id < n_train {
            Split::Train
        } else if id < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        frames.push(FrameEntry {
            id,
            file,
            split,
            bytes,
            phantom_seed,
            cysts: cysts
                .iter()
                .map(|c| CystEntry {
                    x_m: c.center_x_m,
                    z_m: c.center_z_m,
                    radius_m: c.radius_m,
                    interior_scale: c.interior_scale,
                })
                .collect(),
        });
    }

    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        mode: cfg.sim.mode.clone(),
        probe: cfg.probe.clone(),
        pulse: cfg.pulse.clone(),
        n_depth: cfg.sim.n_depth,
        depth_start_m: z0,
        seed: cfg.sim.seed,
        angles_rad: angles,
        frames,
    };
    manifest.save(out)?;
    println!(
        "simulated {} {} frame(s) into {}",
        n,
        cfg.sim.mode,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Channel subsampling factor (1, 2, 2.7, 4, 8, 16 focused; 3, 6, 12,
    /// 24 plane-wave).
    #[arg(long)]
    pub factor: Option<f64>,
    /// Plane-wave angle subset size (31, 11, 7, 3).
    #[arg(long)]
    pub pw_keep: Option<usize>,
    /// Frame whose derived mask seed to use.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output mask file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_mask(args: &MaskArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    let mask = match (args.factor, args.pw_keep) {
        (Some(f), None) => channel_mask_for(&dataset, f, args.seed, args.frame)?
            .context("factor 1 keeps every channel; nothing to write")?,
        (None, Some(k)) => make_pw_subset(dataset.manifest.events_per_frame(), k)?,
        _ => anyhow::bail!("pass exactly one of --factor or --pw-keep"),
    };
    maskio::write_mask(&mask, &args.out)?;
    println!(
        "wrote {} mask ({} of {} kept) to {}",
        if args.factor.is_some() { "channel" } else { "angle" },
        mask.n_keep,
        mask.row_len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct BeamformArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Reconstruction method: das or deepbf.
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub factor: f64,
    /// Plane-wave angle subset size (plane-wave datasets only).
    #[arg(long)]
    pub pw_keep: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Which split to render: train, val, or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write PNG previews.
    #[arg(long, default_value_t = false)]
    pub png: bool,
    #[arg(long, default_value_t = 60.0)]
    pub dynamic_range_db: f64,
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => anyhow::bail!("unknown split {other:?}"),
    })
}

pub fn cmd_beamform(args: &BeamformArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    let _lock = DirLock::acquire(&args.out)?;
    let net = match &args.checkpoint {
        Some(p) => Some(load_checkpoint(p)?.0),
        None => None,
    };
    if args.method == "deepbf" && net.is_none() {
        anyhow::bail!("--method deepbf requires --checkpoint");
    }
    let pw_subset = match args.pw_keep {
        Some(k) => {
            anyhow::ensure!(!dataset.is_focused(), "--pw-keep applies to plane-wave datasets");
            Some(make_pw_subset(dataset.manifest.events_per_frame(), k)?)
        }
        None => None,
    };
    let split = parse_split(&args.split)?;
    let frames = dataset.manifest.frames_in(split);
    anyhow::ensure!(!frames.is_empty(), "no frames in split {:?}", args.split);

    let label = usbf_core::factor_label(args.factor);
    let mut metric_lines = vec!["frame,factor,method,cnr,gcnr,psnr,ssim".to_string()];
    let mut any_rois = false;
    for frame in frames {
        let cube = dataset.load_frame(frame)?;
        let img = frame_image(
            &dataset,
            &cube,
            frame.id,
            &args.method,
            args.factor,
            args.seed,
            pw_subset.as_ref(),
            net.as_ref(),
            args.dynamic_range_db,
        )?;
        let stem = format!("frame{:04}_{}_f{label}", frame.id, args.method);
        pgm::write_pgm(&img, &args.out.join(format!("{stem}.pgm")))?;
        if args.png {
            pgm::write_png(&img, &args.out.join(format!("{stem}.png")))?;
        }
        if let Some((target, background)) = frame_rois(&dataset, frame)? {
            any_rois = true;
            let reference = frame_image(
                &dataset,
                &cube,
                frame.id,
                "das",
                1.0,
                args.seed,
                None,
                None,
                args.dynamic_range_db,
            )?;
            metric_lines.push(format!(
                "{},{label},{},{:.6},{:.6},{},{:.6}",
                frame.id,
                args.method,
                usbf_core::cnr(&img, &target, &background)?,
                usbf_core::gcnr(&img, &target, &background, 256)?,
                {
                    let p = usbf_core::psnr(&reference, &img)?;
                    if p.is_infinite() { "inf".to_string() } else { format!("{p:.6}") }
                },
                usbf_core::ssim(&reference, &img)?,
            ));
        }
    }
    if any_rois {
        std::fs::write(args.out.join("metrics.csv"), metric_lines.join("\n") + "\n")?;
    } else {
        eprintln!("warning: no cyst ROIs in manifest; skipping metric rows");
    }
    println!("beamformed {} frame(s) into {}", metric_lines.len().max(2) - 1, args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// focused or planewave; must match the dataset.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub width_base: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output checkpoint path; updated after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV (default: alongside the checkpoint).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(w) = args.width_base {
        cfg.train.width_base = w;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }

    let dataset = Dataset::open(&args.dataset)?;
    let variant = dataset.variant();
    if let Some(v) = &args.variant {
        anyhow::ensure!(
            v == variant.as_str(),
            "--variant {v} does not match dataset mode {}",
            dataset.manifest.mode
        );
    }

    let train_set = build_samples(&dataset, Split::Train, &cfg.train, cfg.masks.seed)?;
    let val_set = build_samples(&dataset, Split::Val, &cfg.train, cfg.masks.seed)?;
    anyhow::ensure!(!train_set.is_empty(), "dataset has no training frames");
    println!(
        "training {} on {} samples ({} validation), width_base {}, {} epochs",
        variant.as_str(),
        train_set.len(),
        val_set.len(),
        cfg.train.width_base,
        cfg.train.epochs
    );

    let in_h = if dataset.is_focused() {
        dataset.probe.n_rx_focused
    } else {
        dataset.manifest.events_per_frame()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut net = build_for_input(variant, in_h, cfg.train.width_base, &mut rng);
    let tc = TrainConfig {
        lr_start: cfg.train.lr_start,
        lr_end: cfg.train.lr_end,
        weight_decay: cfg.train.weight_decay,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: cfg.train.seed,
    };

    let mut loss_rows: Vec<LossRow> = Vec::new();
    let ckpt_path = args.out.clone();
    let tmp_path = args.out.with_extension("ckpt.tmp");
    let result = usbf_core::nn::train(
        &mut net,
        &train_set,
        (!val_set.is_empty()).then_some(val_set.as_slice()),
        &tc,
        |stats, net_now| {
            loss_rows.push(LossRow {
                epoch: stats.epoch,
                lr: stats.lr,
                train_loss: stats.train_loss,
                val_loss: stats.val_loss,
            });
            save_checkpoint(net_now, &tc, &tmp_path)
                .and_then(|_| std::fs::rename(&tmp_path, &ckpt_path).map_err(Into::into))
                .map_err(|e| usbf_core::CoreError::InvalidConfig(format!("checkpoint write: {e}")))?;
            println!(
                "epoch {:>4}  lr {:.3e}  train {:.6e}{}",
                stats.epoch,
                stats.lr,
                stats.train_loss,
                stats
                    .val_loss
                    .map(|v| format!("  val {v:.6e}"))
                    .unwrap_or_default()
            );
            Ok(())
        },
    );

    let loss_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    write_loss_csv(&loss_rows, &loss_path)?;

    match result {
        Ok(report) => {
            println!(
                "trained {} epochs; final train loss {:.6e}; checkpoint at {}",
                report.epochs.len(),
                report.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN),
                args.out.display()
            );
            Ok(())
        }
        Err(e @ usbf_core::CoreError::TrainAbort { .. }) => {
            // The last completed epoch's checkpoint is still on disk.
            anyhow::bail!("{e}; last good checkpoint preserved at {}", args.out.display())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Subsampling factors, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 2.7, 4.0, 8.0, 16.0])]
    pub factors: Vec<f64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    pub dynamic_range_db: f64,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    let (net, _) = load_checkpoint(&args.checkpoint)?;
    let rows = evaluate(
        &dataset,
        &net,
        &args.factors,
        args.seed,
        args.dynamic_range_db,
        parse_split(&args.split)?,
    )?;
    write_metrics_csv(&rows, &args.out)?;
    for r in &rows {
        println!(
            "factor {:>4}  {:<7} psnr {:>8}  ssim {:.4}{}",
            usbf_core::factor_label(r.factor),
            r.method,
            if r.psnr.is_infinite() { "inf".into() } else { format!("{:.2}", r.psnr) },
            r.ssim,
            match (r.cnr, r.gcnr) {
                (Some(c), Some(g)) => format!("  cnr {c:.3}  gcnr {g:.4}"),
                _ => String::new(),
            }
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of depth planes to time (at least 100).
    #[arg(long, default_value_t = 128)]
    pub planes: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Optional CSV destination for the stats.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    anyhow::ensure!(args.planes >= 100, "--planes must be at least 100");
    let dataset = Dataset::open(&args.dataset)?;
    let (net, _) = load_checkpoint(&args.checkpoint)?;
    let report = bench_inference(&dataset, &net, args.planes, args.batch)?;
    println!("per-depth-plane inference over {} planes:", report.planes);
    println!("  mean_ms   {:.3}", report.mean_ms);
    println!("  median_ms {:.3}", report.median_ms);
    println!("  p95_ms    {:.3}", report.p95_ms);
    println!(
        "  batched ({}-plane) mean_ms {:.3}",
        args.batch, report.batched_mean_ms
    );
    println!(
        "  throughput single {:.1}/s, batched {:.1}/s",
        report.single_throughput_per_s, report.batched_throughput_per_s
    );
    if let Some(path) = &args.out {
        let csv = format!(
            "planes,mean_ms,median_ms,p95_ms,batched_mean_ms\n{},{:.6},{:.6},{:.6},{:.6}\n",
            report.planes, report.mean_ms, report.median_ms, report.p95_ms, report.batched_mean_ms
        );
        std::fs::write(path, csv)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long, default_value = "das")]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub factor: f64,
    #[arg(long)]
    pub pw_keep: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output image path (.pgm; use --png for a PNG alongside).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = false)]
    pub png: bool,
    #[arg(long, default_value_t = 60.0)]
    pub dynamic_range_db: f64,
}

pub fn cmd_render(args: &RenderArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    let frame = dataset
        .manifest
        .frames
        .iter()
        .find(|f| f.id == args.frame)
        .with_context(|| format!("no frame {} in dataset", args.frame))?;
    let net = match &args.checkpoint {
        Some(p) => Some(load_checkpoint(p)?.0),
        None => None,
    };
    let pw_subset = match args.pw_keep {
        Some(k) => Some(make_pw_subset(dataset.manifest.events_per_frame(), k)?),
        None => None,
    };
    let cube = dataset.load_frame(frame)?;
    let img = frame_image(
        &dataset,
        &cube,
        frame.id,
        &args.method,
        args.factor,
        args.seed,
        pw_subset.as_ref(),
        net.as_ref(),
        args.dynamic_range_db,
    )?;
    pgm::write_pgm(&img, &args.out)?;
    if args.png {
        pgm::write_png(&img, &args.out.with_extension("png"))?;
    }
    println!("rendered frame {} to {}", frame.id, args.out.display());
    Ok(())
}
