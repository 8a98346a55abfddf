//! Batch normalization over (batch, height, width) per channel, with exact
//! train-mode gradients including the statistics' dependence on the input.

use super::tensor::Tensor4;
use crate::error::{CoreError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Fraction of the old running statistic kept per update.
    pub momentum: f64,
}

/// Saved forward state needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized input, same shape as x.
    pub xhat: Tensor4,
    /// Per-channel 1 / sqrt(var + eps) used in the forward pass.
    pub inv_std: Vec<f64>,
    /// Per-channel batch statistics (train mode only).
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub training: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor4) -> Result<()> {
        if x.c != self.channels() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} channels", self.channels()),
                got: format!("{}", x.c),
                context: "BatchNorm".into(),
            });
        }
        Ok(())
    }

    /// Forward pass. Train mode normalizes with batch statistics; eval mode
    /// uses the running statistics. Running stats are not touched here; the
    /// training loop applies [`BatchNorm::update_running`] from the cache.
    pub fn forward(&self, x: &Tensor4, training: bool) -> Result<(Tensor4, BnCache)> {
        self.check(x)?;
        let c = self.channels();
        let m = (x.n * x.h * x.w) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        if training {
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..x.n {
                    s += x.plane(b, ch).iter().sum::<f64>();
                }
                mean[ch] = s / m;
            }
            for ch in 0..c {
                let mu = mean[ch];
                let mut s = 0.0;
                for b in 0..x.n {
                    s += x.plane(b, ch).iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>();
                }
                var[ch] = s / m;
            }
        } else {
            mean.copy_from_slice(&self.running_mean);
            var.copy_from_slice(&self.running_var);
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = Tensor4::zeros(x.n, x.c, x.h, x.w);
        let mut out = Tensor4::zeros(x.n, x.c, x.h, x.w);
        for b in 0..x.n {
            for ch in 0..c {
                let mu = mean[ch];
                let is = inv_std[ch];
                let g = self.gamma[ch];
                let bt = self.beta[ch];
                let src = x.plane(b, ch);
                let xh = xhat.plane_mut(b, ch);
                for (o, &v) in xh.iter_mut().zip(src) {
                    *o = (v - mu) * is;
                }
                let dst = out.plane_mut(b, ch);
                for (o, xh_v) in dst.iter_mut().zip(xhat.plane(b, ch)) {
                    *o = g * xh_v + bt;
                }
            }
        }
        Ok((
            out,
            BnCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                training,
            },
        ))
    }

    /// Momentum blend of the running statistics toward the cached batch
    /// statistics.
    pub fn update_running(&mut self, cache: &BnCache) {
        debug_assert!(cache.training);
        for ch in 0..self.channels() {
            self.running_mean[ch] =
                self.momentum * self.running_mean[ch] + (1.0 - self.momentum) * cache.batch_mean[ch];
            self.running_var[ch] =
                self.momentum * self.running_var[ch] + (1.0 - self.momentum) * cache.batch_var[ch];
        }
    }

    /// Backward pass: (grad_x, grad_gamma, grad_beta).
    pub fn backward(
        &self,
        cache: &BnCache,
        grad_out: &Tensor4,
    ) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
        self.check(grad_out)?;
        let c = self.channels();
        let m = (grad_out.n * grad_out.h * grad_out.w) as f64;
        let mut grad_gamma = vec![0.0f64; c];
        let mut grad_beta = vec![0.0f64; c];
        for ch in 0..c {
            let mut sg = 0.0;
            let mut sb = 0.0;
            for b in 0..grad_out.n {
                let g = grad_out.plane(b, ch);
                let xh = cache.xhat.plane(b, ch);
                for (&gv, &xv) in g.iter().zip(xh) {
                    sg += gv * xv;
                    sb += gv;
                }
            }
            grad_gamma[ch] = sg;
            grad_beta[ch] = sb;
        }

        let mut grad_x = Tensor4::zeros(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
        for ch in 0..c {
            let scale = self.gamma[ch] * cache.inv_std[ch];
            if cache.training {
                let mean_dy = grad_beta[ch] / m;
                let mean_dy_xhat = grad_gamma[ch] / m;
                for b in 0..grad_out.n {
                    let g = grad_out.plane(b, ch);
                    let xh = cache.xhat.plane(b, ch);
                    let dst = grad_x.plane_mut(b, ch);
                    for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(xh) {
                        *d = scale * (gv - mean_dy - xv * mean_dy_xhat);
                    }
                }
            } else {
                for b in 0..grad_out.n {
                    let g = grad_out.plane(b, ch);
                    let dst = grad_x.plane_mut(b, ch);
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d = scale * gv;
                    }
                }
            }
        }
        Ok((grad_x, grad_gamma, grad_beta))
    }
}
