//! Checkpoint format: versioned binary with a layer manifest followed by
//! little-endian 64-bit float parameter blobs in manifest order.
//!
//! Layout (all integers and floats little-endian):
//!   magic   4 bytes "UBF1"
//!   u32     version (1)
//!   u8      variant: 0 = focused, 1 = planewave
//!   u32     width_base
//!   u32     in_ch, u32 in_h, u32 out_ch
//!   f64     lr_start, f64 lr_end, f64 weight_decay
//!   u32     epochs, u32 batch_size, u64 seed      (training recipe echo)
//!   u32     n_layers
//!   layer manifest, per layer:
//!     u8 kind: 0 conv, 1 batchnorm, 2 relu, 3 push-skip, 4 concat-skip
//!     conv:      u32 in_ch, out_ch, kh, kw, stride_h, stride_w
//!     batchnorm: u32 channels
//!   parameter blobs, per layer in manifest order:
//!     conv:      weight [out*in*kh*kw] f64, bias [out] f64
//!     batchnorm: gamma, beta, running_mean, running_var, each [channels] f64

use std::io::{Cursor, Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use usbf_core::nn::{BatchNorm, Conv2d, Layer, Network, TrainConfig, Variant};

const MAGIC: &[u8; 4] = b"UBF1";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        put_f64(out, v);
    }
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn save_checkpoint(net: &Network, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(match net.variant {
        Variant::Focused => 0,
        Variant::Planewave => 1,
    });
    put_u32(&mut out, net.width_base as u32);
    put_u32(&mut out, net.in_ch as u32);
    put_u32(&mut out, net.in_h as u32);
    put_u32(&mut out, net.out_ch as u32);
    put_f64(&mut out, cfg.lr_start);
    put_f64(&mut out, cfg.lr_end);
    put_f64(&mut out, cfg.weight_decay);
    put_u32(&mut out, cfg.epochs as u32);
    put_u32(&mut out, cfg.batch_size as u32);
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    put_u32(&mut out, net.layers.len() as u32);
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                out.push(0);
                for v in [c.in_ch, c.out_ch, c.kh, c.kw, c.stride_h, c.stride_w] {
                    put_u32(&mut out, v as u32);
                }
            }
            Layer::BatchNorm(bn) => {
                out.push(1);
                put_u32(&mut out, bn.channels() as u32);
            }
            Layer::Relu => out.push(2),
            Layer::PushSkip => out.push(3),
            Layer::ConcatSkip => out.push(4),
        }
    }
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                put_f64s(&mut out, &c.weight);
                put_f64s(&mut out, &c.bias);
            }
            Layer::BatchNorm(bn) => {
                put_f64s(&mut out, &bn.gamma);
                put_f64s(&mut out, &bn.beta);
                put_f64s(&mut out, &bn.running_mean);
                put_f64s(&mut out, &bn.running_var);
            }
            _ => {}
        }
    }
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, TrainConfig)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < 4 || &bytes[0..4] != MAGIC {
        anyhow::bail!("{}: not a checkpoint file", path.display());
    }
    let mut r = Reader(Cursor::new(&bytes[4..]));
    let version = r.u32()?;
    if version != VERSION {
        anyhow::bail!("{}: unsupported checkpoint version {version}", path.display());
    }
    let variant = match r.u8()? {
        0 => Variant::Focused,
        1 => Variant::Planewave,
        v => anyhow::bail!("unknown variant tag {v}"),
    };
    let width_base = r.u32()? as usize;
    let in_ch = r.u32()? as usize;
    let in_h = r.u32()? as usize;
    let out_ch = r.u32()? as usize;
    let cfg = TrainConfig {
        lr_start: r.f64()?,
        lr_end: r.f64()?,
        weight_decay: r.f64()?,
        epochs: r.u32()? as usize,
        batch_size: r.u32()? as usize,
        seed: r.u64()?,
    };
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layers.push(match r.u8()? {
            0 => {
                let dims: Vec<usize> = (0..6).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
                Layer::Conv(Conv2d::zeros(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]))
            }
            1 => Layer::BatchNorm(BatchNorm::new(r.u32()? as usize)),
            2 => Layer::Relu,
            3 => Layer::PushSkip,
            4 => Layer::ConcatSkip,
            k => anyhow::bail!("unknown layer kind {k}"),
        });
    }
    for layer in &mut layers {
        match layer {
            Layer::Conv(c) => {
                c.weight = r.f64s(c.weight.len())?;
                c.bias = r.f64s(c.bias.len())?;
            }
            Layer::BatchNorm(bn) => {
                let n = bn.channels();
                bn.gamma = r.f64s(n)?;
                bn.beta = r.f64s(n)?;
                bn.running_mean = r.f64s(n)?;
                bn.running_var = r.f64s(n)?;
            }
            _ => {}
        }
    }
    let consumed = r.0.position() as usize + 4;
    if consumed != bytes.len() {
        anyhow::bail!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - consumed
        );
    }
    Ok((
        Network {
            layers,
            variant,
            width_base,
            in_ch,
            in_h,
            out_ch,
        },
        cfg,
    ))
}
