//! Finite-difference validation of every layer's analytic gradients and of
//! a small end-to-end network.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use usbf_core::nn::{build_contracting, BatchNorm, Conv2d, Network, Tensor4, Variant};

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

fn random_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor4 {
    let mut t = Tensor4::zeros(n, c, h, w);
    for v in t.data_mut() {
        *v = rng.gen::<f64>() * 2.0 - 1.0;
    }
    t
}

fn loss_weights(shape: (usize, usize, usize, usize), rng: &mut impl Rng) -> Tensor4 {
    random_tensor(shape.0, shape.1, shape.2, shape.3, rng)
}

fn weighted_sum(y: &Tensor4, w: &Tensor4) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn conv_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for &(in_ch, out_ch, kh, kw, sh, h, w) in &[
        (2usize, 3usize, 3usize, 3usize, 1usize, 6usize, 7usize),
        (3, 2, 3, 3, 2, 9, 5),
        (4, 2, 1, 1, 1, 4, 6),
    ] {
        let mut conv = Conv2d::zeros(in_ch, out_ch, kh, kw, sh, 1);
        for v in conv.weight.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        for v in conv.bias.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        let x = random_tensor(2, in_ch, h, w, &mut rng);
        let y = conv.forward(&x).unwrap();
        let lw = loss_weights(y.shape(), &mut rng);
        let (gx, gw, gb) = conv.backward(&x, &lw).unwrap();

        let fd = |f: &mut dyn FnMut(f64) -> f64, p: f64| -> f64 {
            let h_step = 1e-4 * (1.0 + p.abs());
            (f(p + h_step) - f(p - h_step)) / (2.0 * h_step)
        };

        // Weights.
        for wi in (0..conv.weight.len()).step_by(3) {
            let p0 = conv.weight[wi];
            let mut f = |p: f64| {
                let mut c2 = conv.clone();
                c2.weight[wi] = p;
                weighted_sum(&c2.forward(&x).unwrap(), &lw)
            };
            let num = fd(&mut f, p0);
            assert!(
                rel_err(gw[wi], num) < 1e-5,
                "kernel grad {wi}: {} vs {num}",
                gw[wi]
            );
        }
        // Bias.
        for bi in 0..conv.bias.len() {
            let p0 = conv.bias[bi];
            let mut f = |p: f64| {
                let mut c2 = conv.clone();
                c2.bias[bi] = p;
                weighted_sum(&c2.forward(&x).unwrap(), &lw)
            };
            let num = fd(&mut f, p0);
            assert!(rel_err(gb[bi], num) < 1e-5, "bias grad {bi}");
        }
        // Input.
        for xi in (0..x.len()).step_by(7) {
            let p0 = x.data()[xi];
            let mut f = |p: f64| {
                let mut x2 = x.clone();
                x2.data_mut()[xi] = p;
                weighted_sum(&conv.forward(&x2).unwrap(), &lw)
            };
            let num = fd(&mut f, p0);
            assert!(
                rel_err(gx.data()[xi], num) < 1e-5,
                "input grad {xi}: {} vs {num}",
                gx.data()[xi]
            );
        }
    }
}

#[test]
fn batchnorm_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut bn = BatchNorm::new(3);
    for v in bn.gamma.iter_mut() {
        *v = 0.5 + rng.gen::<f64>();
    }
    for v in bn.beta.iter_mut() {
        *v = rng.gen::<f64>() - 0.5;
    }
    let x = random_tensor(2, 3, 4, 5, &mut rng);
    let (y, cache) = bn.forward(&x, true).unwrap();
    let lw = loss_weights(y.shape(), &mut rng);
    let (gx, gg, gb) = bn.backward(&cache, &lw).unwrap();

    let fd = |f: &mut dyn FnMut(f64) -> f64, p: f64| -> f64 {
        let h_step = 1e-4 * (1.0 + p.abs());
        (f(p + h_step) - f(p - h_step)) / (2.0 * h_step)
    };

    for ch in 0..3 {
        let p0 = bn.gamma[ch];
        let mut f = |p: f64| {
            let mut b2 = bn.clone();
            b2.gamma[ch] = p;
            weighted_sum(&b2.forward(&x, true).unwrap().0, &lw)
        };
        assert!(rel_err(gg[ch], fd(&mut f, p0)) < 1e-5, "gamma {ch}");

        let p0 = bn.beta[ch];
        let mut f = |p: f64| {
            let mut b2 = bn.clone();
            b2.beta[ch] = p;
            weighted_sum(&b2.forward(&x, true).unwrap().0, &lw)
        };
        assert!(rel_err(gb[ch], fd(&mut f, p0)) < 1e-5, "beta {ch}");
    }
    // Input gradient includes the statistics' dependence on x.
    for xi in (0..x.len()).step_by(5) {
        let p0 = x.data()[xi];
        let mut f = |p: f64| {
            let mut x2 = x.clone();
            x2.data_mut()[xi] = p;
            weighted_sum(&bn.forward(&x2, true).unwrap().0, &lw)
        };
        let num = fd(&mut f, p0);
        assert!(
            rel_err(gx.data()[xi], num) < 1e-5,
            "bn input grad {xi}: {} vs {num}",
            gx.data()[xi]
        );
    }
}

#[test]
fn batchnorm_eval_mode_gradient_uses_running_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut bn = BatchNorm::new(2);
    bn.running_mean = vec![0.3, -0.2];
    bn.running_var = vec![1.5, 0.7];
    let x = random_tensor(1, 2, 3, 3, &mut rng);
    let (y, cache) = bn.forward(&x, false).unwrap();
    let lw = loss_weights(y.shape(), &mut rng);
    let (gx, _, _) = bn.backward(&cache, &lw).unwrap();
    for xi in 0..x.len() {
        let p0 = x.data()[xi];
        let h_step = 1e-4 * (1.0 + p0.abs());
        let mut f = |p: f64| {
            let mut x2 = x.clone();
            x2.data_mut()[xi] = p;
            weighted_sum(&bn.forward(&x2, false).unwrap().0, &lw)
        };
        let num = (f(p0 + h_step) - f(p0 - h_step)) / (2.0 * h_step);
        assert!(rel_err(gx.data()[xi], num) < 1e-5);
    }
}

fn net_loss(net: &Network, x: &Tensor4, lw: &Tensor4) -> f64 {
    let (y, _) = net.forward_cached(x, true).unwrap();
    weighted_sum(&y, lw)
}

#[test]
fn end_to_end_network_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    // Tiny contracting variant: height 8, width 12, width_base 4.
    let net = build_contracting(Variant::Focused, 3, 8, 2, 2, 4, &mut rng);
    let x = random_tensor(2, 3, 8, 12, &mut rng);
    let (y, trace) = net.forward_cached(&x, true).unwrap();
    assert_eq!(y.shape(), (2, 2, 1, 12));
    let lw = loss_weights(y.shape(), &mut rng);
    let (grads, gx) = net.backward(&trace, &lw).unwrap();
    let flat_g = Network::flat_grads(&grads);
    let flat_p = net.flat_params();
    assert_eq!(flat_g.len(), flat_p.len());

    // Central differences starting at h = 1e-4, refining where a ReLU kink
    // lands inside the interval (a kink's contamination does not shrink
    // with h, but the chance of straddling one does; a genuinely wrong
    // gradient disagrees at every h).
    let fd_best = |probe: &mut dyn FnMut(f64) -> f64, p0: f64, analytic: f64| -> f64 {
        let mut best = f64::INFINITY;
        for h in [1e-4, 1e-5, 1e-6] {
            let hh = h * (1.0 + p0.abs());
            let num = (probe(p0 + hh) - probe(p0 - hh)) / (2.0 * hh);
            best = best.min(rel_err(analytic, num));
        }
        best
    };

    // Spot-check a deterministic spread of parameters.
    let step = (flat_p.len() / 160).max(1);
    let mut worst = 0.0f64;
    for pi in (0..flat_p.len()).step_by(step) {
        let p0 = flat_p[pi];
        let mut probe = |p: f64| {
            let mut n2 = net.clone();
            let mut params = flat_p.clone();
            params[pi] = p;
            n2.set_flat_params(&params).unwrap();
            net_loss(&n2, &x, &lw)
        };
        let e = fd_best(&mut probe, p0, flat_g[pi]);
        worst = worst.max(e);
        assert!(e < 1e-4, "param {pi}: analytic {} err {e}", flat_g[pi]);
    }

    // Input gradient.
    for xi in (0..x.len()).step_by(37) {
        let p0 = x.data()[xi];
        let gi = gx.data()[xi];
        let mut probe = |p: f64| {
            let mut x2 = x.clone();
            x2.data_mut()[xi] = p;
            net_loss(&net, &x2, &lw)
        };
        let e = fd_best(&mut probe, p0, gi);
        assert!(e < 1e-4, "input {xi}: err {e}");
    }
    eprintln!("worst end-to-end relative error: {worst:.3e}");
}
