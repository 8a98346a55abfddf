//! 2-D convolution (cross-correlation) with "same" zero padding and its
//! exact gradients.

use rayon::prelude::*;

use super::tensor::Tensor4;
use crate::error::{CoreError, Result};

/// Convolution layer. Padding keeps `out = ceil(in / stride)` per axis, so a
/// stride-1 3x3 preserves spatial dims and stride (2,1) ceil-halves the
/// height only.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_ch][in_ch][kh][kw]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride_h: usize,
    pub stride_w: usize,
}

impl Conv2d {
    pub fn zeros(
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride_h: usize,
        stride_w: usize,
    ) -> Self {
        Self {
            weight: vec![0.0; out_ch * in_ch * kh * kw],
            bias: vec![0.0; out_ch],
            in_ch,
            out_ch,
            kh,
            kw,
            stride_h,
            stride_w,
        }
    }

    #[inline]
    fn w_at(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((oc * self.in_ch + ic) * self.kh + ky) * self.kw + kx]
    }

    /// (out_h, out_w, pad_top, pad_left) for an input of `h x w`.
    pub fn geometry(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let out_h = h.div_ceil(self.stride_h);
        let out_w = w.div_ceil(self.stride_w);
        let pad_h = ((out_h - 1) * self.stride_h + self.kh).saturating_sub(h);
        let pad_w = ((out_w - 1) * self.stride_w + self.kw).saturating_sub(w);
        (out_h, out_w, pad_h / 2, pad_w / 2)
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.c != self.in_ch {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} input channels", self.in_ch),
                got: format!("{}", x.c),
                context: "Conv2d::forward".into(),
            });
        }
        let (out_h, out_w, pad_t, pad_l) = self.geometry(x.h, x.w);
        let mut out = Tensor4::zeros(x.n, self.out_ch, out_h, out_w);
        let plane = out_h * out_w;
        let n = x.n;
        let out_ch = self.out_ch;
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, o_plane)| {
                let b = idx / out_ch;
                let oc = idx % out_ch;
                debug_assert!(b < n);
                o_plane.fill(self.bias[oc]);
                for ic in 0..self.in_ch {
                    let x_plane = x.plane(b, ic);
                    for ky in 0..self.kh {
                        for kx in 0..self.kw {
                            let w = self.w_at(oc, ic, ky, kx);
                            if w == 0.0 {
                                continue;
                            }
                            for oy in 0..out_h {
                                let iy = (oy * self.stride_h + ky) as isize - pad_t as isize;
                                if iy < 0 || iy >= x.h as isize {
                                    continue;
                                }
                                let x_row = &x_plane[iy as usize * x.w..][..x.w];
                                let o_row = &mut o_plane[oy * out_w..][..out_w];
                                if self.stride_w == 1 {
                                    let shift = kx as isize - pad_l as isize;
                                    let ox_lo = (-shift).max(0) as usize;
                                    let ox_hi = ((x.w as isize - shift).min(out_w as isize)).max(0)
                                        as usize;
                                    let src =
                                        &x_row[(ox_lo as isize + shift) as usize..][..ox_hi - ox_lo];
                                    for (o, &v) in o_row[ox_lo..ox_hi].iter_mut().zip(src) {
                                        *o += w * v;
                                    }
                                } else {
                                    for (ox, o) in o_row.iter_mut().enumerate() {
                                        let ix = (ox * self.stride_w + kx) as isize
                                            - pad_l as isize;
                                        if ix >= 0 && ix < x.w as isize {
                                            *o += w * x_row[ix as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Exact gradients of the forward map: (grad_x, grad_weight, grad_bias).
    pub fn backward(
        &self,
        x: &Tensor4,
        grad_out: &Tensor4,
    ) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
        let (out_h, out_w, pad_t, pad_l) = self.geometry(x.h, x.w);
        if grad_out.shape() != (x.n, self.out_ch, out_h, out_w) {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{}x{}x{out_h}x{out_w}", x.n, self.out_ch),
                got: format!("{:?}", grad_out.shape()),
                context: "Conv2d::backward".into(),
            });
        }

        let mut grad_bias = vec![0.0f64; self.out_ch];
        for oc in 0..self.out_ch {
            let mut s = 0.0;
            for b in 0..x.n {
                s += grad_out.plane(b, oc).iter().sum::<f64>();
            }
            grad_bias[oc] = s;
        }

        // grad_weight: one (oc, ic) block per task.
        let kk = self.kh * self.kw;
        let mut grad_weight = vec![0.0f64; self.weight.len()];
        grad_weight
            .par_chunks_mut(kk)
            .enumerate()
            .for_each(|(idx, gw)| {
                let oc = idx / self.in_ch;
                let ic = idx % self.in_ch;
                for b in 0..x.n {
                    let x_plane = x.plane(b, ic);
                    let g_plane = grad_out.plane(b, oc);
                    for ky in 0..self.kh {
                        for kx in 0..self.kw {
                            let mut acc = 0.0;
                            for oy in 0..out_h {
                                let iy = (oy * self.stride_h + ky) as isize - pad_t as isize;
                                if iy < 0 || iy >= x.h as isize {
                                    continue;
                                }
                                let x_row = &x_plane[iy as usize * x.w..][..x.w];
                                let g_row = &g_plane[oy * out_w..][..out_w];
                                if self.stride_w == 1 {
                                    let shift = kx as isize - pad_l as isize;
                                    let ox_lo = (-shift).max(0) as usize;
                                    let ox_hi = ((x.w as isize - shift).min(out_w as isize)).max(0)
                                        as usize;
                                    let src =
                                        &x_row[(ox_lo as isize + shift) as usize..][..ox_hi - ox_lo];
                                    for (&g, &v) in g_row[ox_lo..ox_hi].iter().zip(src) {
                                        acc += g * v;
                                    }
                                } else {
                                    for (ox, &g) in g_row.iter().enumerate() {
                                        let ix = (ox * self.stride_w + kx) as isize
                                            - pad_l as isize;
                                        if ix >= 0 && ix < x.w as isize {
                                            acc += g * x_row[ix as usize];
                                        }
                                    }
                                }
                            }
                            gw[ky * self.kw + kx] += acc;
                        }
                    }
                }
            });

        // grad_x: one (b, ic) plane per task.
        let mut grad_x = Tensor4::zeros(x.n, x.c, x.h, x.w);
        let in_plane = x.h * x.w;
        let in_ch = self.in_ch;
        let xh = x.h;
        let xw = x.w;
        grad_x
            .data_mut()
            .par_chunks_mut(in_plane)
            .enumerate()
            .for_each(|(idx, gx_plane)| {
                let b = idx / in_ch;
                let ic = idx % in_ch;
                for oc in 0..self.out_ch {
                    let g_plane = grad_out.plane(b, oc);
                    for ky in 0..self.kh {
                        for kx in 0..self.kw {
                            let w = self.w_at(oc, ic, ky, kx);
                            if w == 0.0 {
                                continue;
                            }
                            for oy in 0..out_h {
                                let iy = (oy * self.stride_h + ky) as isize - pad_t as isize;
                                if iy < 0 || iy >= xh as isize {
                                    continue;
                                }
                                let gx_row = &mut gx_plane[iy as usize * xw..][..xw];
                                let g_row = &g_plane[oy * out_w..][..out_w];
                                if self.stride_w == 1 {
                                    let shift = kx as isize - pad_l as isize;
                                    let ox_lo = (-shift).max(0) as usize;
                                    let ox_hi = ((xw as isize - shift).min(out_w as isize)).max(0)
                                        as usize;
                                    let dst = &mut gx_row[(ox_lo as isize + shift) as usize..]
                                        [..ox_hi - ox_lo];
                                    for (d, &g) in dst.iter_mut().zip(&g_row[ox_lo..ox_hi]) {
                                        *d += w * g;
                                    }
                                } else {
                                    for (ox, &g) in g_row.iter().enumerate() {
                                        let ix = (ox * self.stride_w + kx) as isize
                                            - pad_l as isize;
                                        if ix >= 0 && ix < xw as isize {
                                            gx_row[ix as usize] += w * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });

        Ok((grad_x, grad_weight, grad_bias))
    }
}
