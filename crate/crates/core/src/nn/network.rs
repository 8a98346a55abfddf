//! The contracting-path regression network used for learned beamforming.
//!
//! Layer graph: a head of stride-1 3x3 conv + BN + ReLU blocks, then one
//! reduction stage per ceil-halving of the input height down to 1. Each
//! stage runs three stride-1 conv blocks, concatenates the stage input back
//! onto the features, and reduces with a stride-(2,1) conv block. A final
//! 1x1 convolution (no BN, no ReLU) maps to the output channels, so only
//! the height axis contracts and the width axis is preserved end to end.
//!
//! The focused variant (input 3x64x96, 2-conv head, 6 stages) and the
//! plane-wave variant (input 3x31x192, 6-conv head, 5 stages) both total 27
//! convolutions. Feature width starts at `width_base` and doubles per stage,
//! capped at 64.

use rand::Rng;

use super::batchnorm::{BatchNorm, BnCache};
use super::conv::Conv2d;
use super::init::xavier_init;
use super::tensor::Tensor4;
use crate::error::{CoreError, Result};

pub const FOCUSED_IN_CH: usize = 3;
pub const FOCUSED_IN_H: usize = 64;
pub const FOCUSED_IN_W: usize = 96;
pub const FOCUSED_OUT_CH: usize = 2;
pub const PLANEWAVE_IN_CH: usize = 3;
pub const PLANEWAVE_IN_H: usize = 31;
pub const PLANEWAVE_IN_W: usize = 192;
pub const PLANEWAVE_OUT_CH: usize = 1;

const WIDTH_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Focused,
    Planewave,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Focused => "focused",
            Variant::Planewave => "planewave",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    BatchNorm(BatchNorm),
    Relu,
    /// Saves the current activation for a later `ConcatSkip`.
    PushSkip,
    /// Concatenates the most recent saved activation onto the current one
    /// along channels (current first).
    ConcatSkip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub variant: Variant,
    pub width_base: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub out_ch: usize,
}

/// Per-layer state saved by a cached forward pass.
enum LayerTrace {
    Conv { input: Tensor4 },
    BatchNorm { cache: BnCache },
    Relu { input: Tensor4 },
    PushSkip,
    ConcatSkip { c_current: usize },
}

/// Activations and auxiliary state of one forward pass.
pub struct Trace {
    steps: Vec<LayerTrace>,
    training: bool,
}

/// Parameter gradients, mirrored layer by layer.
pub enum LayerGrads {
    Conv { weight: Vec<f64>, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
    None,
}

pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn scaled(mut self, s: f64) -> Self {
        for l in &mut self.layers {
            match l {
                LayerGrads::Conv { weight, bias } => {
                    weight.iter_mut().for_each(|v| *v *= s);
                    bias.iter_mut().for_each(|v| *v *= s);
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    gamma.iter_mut().for_each(|v| *v *= s);
                    beta.iter_mut().for_each(|v| *v *= s);
                }
                LayerGrads::None => {}
            }
        }
        self
    }
}

fn stage_count(mut h: usize) -> usize {
    let mut n = 0;
    while h > 1 {
        h = h.div_ceil(2);
        n += 1;
    }
    n
}

fn conv_glorot<R: Rng>(
    in_ch: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    stride_h: usize,
    rng: &mut R,
) -> Conv2d {
    let mut conv = Conv2d::zeros(in_ch, out_ch, kh, kw, stride_h, 1);
    let fan_in = in_ch * kh * kw;
    let fan_out = out_ch * kh * kw;
    conv.weight = xavier_init(fan_in, fan_out, conv.weight.len(), rng);
    conv
}

/// Builds a contracting network for an arbitrary input geometry. Used
/// directly for small test networks; the canonical variants go through
/// [`build_deepbf`].
pub fn build_contracting<R: Rng>(
    variant: Variant,
    in_ch: usize,
    in_h: usize,
    out_ch: usize,
    head_convs: usize,
    width_base: usize,
    rng: &mut R,
) -> Network {
    assert!(head_convs >= 1 && width_base >= 1 && in_h >= 2);
    let cap = WIDTH_CAP.max(width_base);
    let mut layers = Vec::new();
    let mut ch = in_ch;
    for _ in 0..head_convs {
        layers.push(Layer::Conv(conv_glorot(ch, width_base, 3, 3, 1, rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(width_base)));
        layers.push(Layer::Relu);
        ch = width_base;
    }
    let stages = stage_count(in_h);
    for s in 0..stages {
        let w = (width_base << s).min(cap);
        layers.push(Layer::PushSkip);
        layers.push(Layer::Conv(conv_glorot(ch, w, 3, 3, 1, rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(w)));
        layers.push(Layer::Relu);
        for _ in 0..2 {
            layers.push(Layer::Conv(conv_glorot(w, w, 3, 3, 1, rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(w)));
            layers.push(Layer::Relu);
        }
        layers.push(Layer::ConcatSkip);
        layers.push(Layer::Conv(conv_glorot(w + ch, w, 3, 3, 2, rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(w)));
        layers.push(Layer::Relu);
        ch = w;
    }
    layers.push(Layer::Conv(conv_glorot(ch, out_ch, 1, 1, 1, rng)));
    Network {
        layers,
        variant,
        width_base,
        in_ch,
        in_h,
        out_ch,
    }
}

/// Variant network for a non-canonical input height (the width axis is
/// fully convolutional, so it stays free). Head depth and output channels
/// follow the variant.
pub fn build_for_input<R: Rng>(
    variant: Variant,
    in_h: usize,
    width_base: usize,
    rng: &mut R,
) -> Network {
    match variant {
        Variant::Focused => {
            build_contracting(variant, FOCUSED_IN_CH, in_h, FOCUSED_OUT_CH, 2, width_base, rng)
        }
        Variant::Planewave => build_contracting(
            variant,
            PLANEWAVE_IN_CH,
            in_h,
            PLANEWAVE_OUT_CH,
            6,
            width_base,
            rng,
        ),
    }
}

/// The two canonical variants: focused maps `[B,3,64,96] -> [B,2,1,96]`,
/// plane-wave maps `[B,3,31,192] -> [B,1,1,192]`; both have exactly 27
/// convolutions with a 1x1 final layer.
pub fn build_deepbf<R: Rng>(variant: Variant, width_base: usize, rng: &mut R) -> Network {
    match variant {
        Variant::Focused => build_for_input(variant, FOCUSED_IN_H, width_base, rng),
        Variant::Planewave => build_for_input(variant, PLANEWAVE_IN_H, width_base, rng),
    }
}

impl Network {
    pub fn conv_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Conv(_)))
            .count()
    }

    pub fn last_conv(&self) -> Option<&Conv2d> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    /// Learnable parameter count: conv weights and biases plus BN scale and
    /// shift (running statistics are state, not parameters).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weight.len() + c.bias.len(),
                Layer::BatchNorm(bn) => bn.gamma.len() + bn.beta.len(),
                _ => 0,
            })
            .sum()
    }

    /// Cached forward pass. Never mutates the network; in training mode BN
    /// uses batch statistics and the caller applies
    /// [`Network::update_running_stats`] afterwards.
    pub fn forward_cached(&self, x: &Tensor4, training: bool) -> Result<(Tensor4, Trace)> {
        let mut steps = Vec::with_capacity(self.layers.len());
        let mut skip_stack: Vec<Tensor4> = Vec::new();
        let mut cur = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(conv) => {
                    let out = conv.forward(&cur).map_err(|e| layer_err(li, e))?;
                    steps.push(LayerTrace::Conv { input: cur });
                    cur = out;
                }
                Layer::BatchNorm(bn) => {
                    let (out, cache) = bn.forward(&cur, training).map_err(|e| layer_err(li, e))?;
                    steps.push(LayerTrace::BatchNorm { cache });
                    cur = out;
                }
                Layer::Relu => {
                    let mut out = cur.clone();
                    out.data_mut().iter_mut().for_each(|v| {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    });
                    steps.push(LayerTrace::Relu { input: cur });
                    cur = out;
                }
                Layer::PushSkip => {
                    skip_stack.push(cur.clone());
                    steps.push(LayerTrace::PushSkip);
                }
                Layer::ConcatSkip => {
                    let skip = skip_stack.pop().ok_or_else(|| {
                        layer_err(li, CoreError::InvalidArgument("no saved skip".into()))
                    })?;
                    let c_current = cur.c;
                    let out = cur.concat_channels(&skip).map_err(|e| layer_err(li, e))?;
                    steps.push(LayerTrace::ConcatSkip { c_current });
                    cur = out;
                }
            }
        }
        Ok((cur, Trace { steps, training }))
    }

    /// Inference forward pass (eval-mode BN, no trace kept).
    pub fn forward_eval(&self, x: &Tensor4) -> Result<Tensor4> {
        let mut skip_stack: Vec<Tensor4> = Vec::new();
        let mut cur = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Conv(conv) => conv.forward(&cur).map_err(|e| layer_err(li, e))?,
                Layer::BatchNorm(bn) => bn.forward(&cur, false).map_err(|e| layer_err(li, e))?.0,
                Layer::Relu => {
                    let mut out = cur;
                    out.data_mut().iter_mut().for_each(|v| {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    });
                    out
                }
                Layer::PushSkip => {
                    skip_stack.push(cur.clone());
                    cur
                }
                Layer::ConcatSkip => {
                    let skip = skip_stack.pop().ok_or_else(|| {
                        layer_err(li, CoreError::InvalidArgument("no saved skip".into()))
                    })?;
                    cur.concat_channels(&skip).map_err(|e| layer_err(li, e))?
                }
            };
        }
        Ok(cur)
    }

    /// Applies the batch statistics recorded in a training trace to the BN
    /// running statistics.
    pub fn update_running_stats(&mut self, trace: &Trace) {
        debug_assert!(trace.training);
        for (layer, step) in self.layers.iter_mut().zip(&trace.steps) {
            if let (Layer::BatchNorm(bn), LayerTrace::BatchNorm { cache }) = (layer, step) {
                bn.update_running(cache);
            }
        }
    }

    /// Backpropagates `grad_out` through the trace, returning parameter
    /// gradients (layer-aligned) and the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor4) -> Result<(Gradients, Tensor4)> {
        let mut layer_grads: Vec<LayerGrads> =
            (0..self.layers.len()).map(|_| LayerGrads::None).collect();
        let mut skip_grads: Vec<Tensor4> = Vec::new();
        let mut grad = grad_out.clone();
        for li in (0..self.layers.len()).rev() {
            match (&self.layers[li], &trace.steps[li]) {
                (Layer::Conv(conv), LayerTrace::Conv { input }) => {
                    let (gx, gw, gb) = conv.backward(input, &grad).map_err(|e| layer_err(li, e))?;
                    layer_grads[li] = LayerGrads::Conv {
                        weight: gw,
                        bias: gb,
                    };
                    grad = gx;
                }
                (Layer::BatchNorm(bn), LayerTrace::BatchNorm { cache }) => {
                    let (gx, gg, gb) = bn.backward(cache, &grad).map_err(|e| layer_err(li, e))?;
                    layer_grads[li] = LayerGrads::BatchNorm {
                        gamma: gg,
                        beta: gb,
                    };
                    grad = gx;
                }
                (Layer::Relu, LayerTrace::Relu { input }) => {
                    let mut gx = grad;
                    for (g, &v) in gx.data_mut().iter_mut().zip(input.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    grad = gx;
                }
                (Layer::ConcatSkip, LayerTrace::ConcatSkip { c_current }) => {
                    let (g_cur, g_skip) = grad.split_channels(*c_current);
                    skip_grads.push(g_skip);
                    grad = g_cur;
                }
                (Layer::PushSkip, LayerTrace::PushSkip) => {
                    let g_skip = skip_grads.pop().ok_or_else(|| {
                        layer_err(li, CoreError::InvalidArgument("unmatched skip grad".into()))
                    })?;
                    if g_skip.shape() != grad.shape() {
                        return Err(layer_err(
                            li,
                            CoreError::ShapeMismatch {
                                expected: format!("{:?}", grad.shape()),
                                got: format!("{:?}", g_skip.shape()),
                                context: "skip gradient".into(),
                            },
                        ));
                    }
                    for (g, &s) in grad.data_mut().iter_mut().zip(g_skip.data()) {
                        *g += s;
                    }
                }
                _ => {
                    return Err(layer_err(
                        li,
                        CoreError::InvalidArgument("trace/layer mismatch".into()),
                    ))
                }
            }
        }
        Ok((
            Gradients {
                layers: layer_grads,
            },
            grad,
        ))
    }

    /// SGD update over every learnable parameter. BN scale/shift are exempt
    /// from weight decay.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, weight_decay: f64) {
        use super::optim::sgd_step;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            match (layer, g) {
                (Layer::Conv(conv), LayerGrads::Conv { weight, bias }) => {
                    sgd_step(&mut conv.weight, weight, lr, weight_decay);
                    sgd_step(&mut conv.bias, bias, lr, weight_decay);
                }
                (Layer::BatchNorm(bn), LayerGrads::BatchNorm { gamma, beta }) => {
                    sgd_step(&mut bn.gamma, gamma, lr, 0.0);
                    sgd_step(&mut bn.beta, beta, lr, 0.0);
                }
                _ => {}
            }
        }
    }

    /// Flat copy of all learnable parameters in layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.extend_from_slice(&c.weight);
                    out.extend_from_slice(&c.bias);
                }
                Layer::BatchNorm(bn) => {
                    out.extend_from_slice(&bn.gamma);
                    out.extend_from_slice(&bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    /// Writes a flat parameter vector back (inverse of [`flat_params`]).
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} params", self.param_count()),
                got: format!("{}", params.len()),
                context: "set_flat_params".into(),
            });
        }
        let mut at = 0usize;
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    let nw = c.weight.len();
                    c.weight.copy_from_slice(&params[at..at + nw]);
                    at += nw;
                    let nb = c.bias.len();
                    c.bias.copy_from_slice(&params[at..at + nb]);
                    at += nb;
                }
                Layer::BatchNorm(bn) => {
                    let ng = bn.gamma.len();
                    bn.gamma.copy_from_slice(&params[at..at + ng]);
                    at += ng;
                    let nb = bn.beta.len();
                    bn.beta.copy_from_slice(&params[at..at + nb]);
                    at += nb;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Flat copy of the gradients in the same order as [`flat_params`].
    pub fn flat_grads(grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &grads.layers {
            match g {
                LayerGrads::Conv { weight, bias } => {
                    out.extend_from_slice(weight);
                    out.extend_from_slice(bias);
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    out.extend_from_slice(gamma);
                    out.extend_from_slice(beta);
                }
                LayerGrads::None => {}
            }
        }
        out
    }
}

fn layer_err(layer_index: usize, e: CoreError) -> CoreError {
    CoreError::InvalidArgument(format!("layer {layer_index}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_variants_have_27_convs_and_stated_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let focused = build_deepbf(Variant::Focused, 8, &mut rng);
        assert_eq!(focused.conv_layer_count(), 27);
        let last = focused.last_conv().unwrap();
        assert_eq!((last.kh, last.kw), (1, 1));
        let x = Tensor4::zeros(1, 3, 64, 96);
        let y = focused.forward_eval(&x).unwrap();
        assert_eq!(y.shape(), (1, 2, 1, 96));

        let pw = build_deepbf(Variant::Planewave, 8, &mut rng);
        assert_eq!(pw.conv_layer_count(), 27);
        let last = pw.last_conv().unwrap();
        assert_eq!((last.kh, last.kw), (1, 1));
        let x = Tensor4::zeros(1, 3, 31, 192);
        let y = pw.forward_eval(&x).unwrap();
        assert_eq!(y.shape(), (1, 1, 1, 192));
    }

    #[test]
    fn width_axis_is_preserved_through_every_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = build_deepbf(Variant::Focused, 4, &mut rng);
        let mut cur = Tensor4::zeros(1, 3, 64, 96);
        let mut skips: Vec<Tensor4> = Vec::new();
        for layer in &net.layers {
            cur = match layer {
                Layer::Conv(c) => c.forward(&cur).unwrap(),
                Layer::BatchNorm(bn) => bn.forward(&cur, false).unwrap().0,
                Layer::Relu => cur,
                Layer::PushSkip => {
                    skips.push(cur.clone());
                    cur
                }
                Layer::ConcatSkip => cur.concat_channels(&skips.pop().unwrap()).unwrap(),
            };
            assert_eq!(cur.w, 96);
        }
        assert_eq!(cur.h, 1);
    }

    #[test]
    fn param_count_matches_hand_sum_for_width_base_4() {
        // Focused variant, width_base 4, stage widths 4, 8, 16, 32, 64, 64.
        // Each conv k x k (cin -> cout) holds 9*cin*cout + cout params and
        // its BN another 2*cout; the final 1x1 (64 -> 2) has 130 and no BN.
        let head = (9 * 3 * 4 + 4 + 8) + (9 * 4 * 4 + 4 + 8);
        let stage = |cin: usize, w: usize| {
            (9 * cin * w + w + 2 * w)
                + 2 * (9 * w * w + w + 2 * w)
                + (9 * (w + cin) * w + w + 2 * w)
        };
        let total = head
            + stage(4, 4)
            + stage(4, 8)
            + stage(8, 16)
            + stage(16, 32)
            + stage(32, 64)
            + stage(64, 64)
            + (64 * 2 + 2);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = build_deepbf(Variant::Focused, 4, &mut rng);
        assert_eq!(net.param_count(), total);

        // And it is a pure function of (variant, width_base).
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let net2 = build_deepbf(Variant::Focused, 4, &mut rng2);
        assert_eq!(net2.param_count(), total);
    }

    #[test]
    fn zero_input_gives_zero_pre_final_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = build_contracting(Variant::Focused, 2, 8, 1, 2, 4, &mut rng);
        // Run everything except the final conv.
        let mut cur = Tensor4::zeros(2, 2, 8, 12);
        let mut skips: Vec<Tensor4> = Vec::new();
        for layer in &net.layers[..net.layers.len() - 1] {
            cur = match layer {
                Layer::Conv(c) => c.forward(&cur).unwrap(),
                Layer::BatchNorm(bn) => bn.forward(&cur, false).unwrap().0,
                Layer::Relu => {
                    let mut o = cur;
                    o.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    o
                }
                Layer::PushSkip => {
                    skips.push(cur.clone());
                    cur
                }
                Layer::ConcatSkip => cur.concat_channels(&skips.pop().unwrap()).unwrap(),
            };
        }
        assert!(cur.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_forward_commutes_with_batch_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = build_contracting(Variant::Focused, 3, 8, 2, 2, 4, &mut rng);
        let mut a = Tensor4::zeros(1, 3, 8, 12);
        let mut b = Tensor4::zeros(1, 3, 8, 12);
        for (i, v) in a.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.17).sin();
        }
        for (i, v) in b.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.31).cos();
        }
        let ab = Tensor4::stack(&[&a, &b]).unwrap();
        let ba = Tensor4::stack(&[&b, &a]).unwrap();
        let y_ab = net.forward_eval(&ab).unwrap();
        let y_ba = net.forward_eval(&ba).unwrap();
        for ch in 0..2 {
            assert_eq!(y_ab.plane(0, ch), y_ba.plane(1, ch));
            assert_eq!(y_ab.plane(1, ch), y_ba.plane(0, ch));
        }
    }

    #[test]
    fn flat_param_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = build_contracting(Variant::Planewave, 3, 6, 1, 2, 4, &mut rng);
        let p = net.flat_params();
        assert_eq!(p.len(), net.param_count());
        let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        net.set_flat_params(&doubled).unwrap();
        assert_eq!(net.flat_params(), doubled);
        assert!(net.set_flat_params(&doubled[1..]).is_err());
    }
}
