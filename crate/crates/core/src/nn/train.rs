//! Minibatch SGD training on (input, target) tensor pairs with the L2 loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::optim::TrainConfig;
use super::tensor::Tensor4;
use crate::error::{CoreError, Result};

/// One supervised example; both tensors have batch size 1.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: Tensor4,
    pub target: Tensor4,
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Mean squared error over every output element of the batch.
pub fn mse(prediction: &Tensor4, target: &Tensor4) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", prediction.shape()),
            context: "mse".into(),
        });
    }
    let n = prediction.len() as f64;
    Ok(prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

fn batch_of(samples: &[TrainSample], idx: &[usize]) -> Result<(Tensor4, Tensor4)> {
    let inputs: Vec<&Tensor4> = idx.iter().map(|&i| &samples[i].input).collect();
    let targets: Vec<&Tensor4> = idx.iter().map(|&i| &samples[i].target).collect();
    Ok((Tensor4::stack(&inputs)?, Tensor4::stack(&targets)?))
}

/// Mean loss of the network in eval mode over a sample set.
pub fn eval_loss(net: &Network, samples: &[TrainSample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(CoreError::InvalidArgument("empty evaluation set".into()));
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    let indices: Vec<usize> = (0..samples.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, t) = batch_of(samples, chunk)?;
        let y = net.forward_eval(&x)?;
        total += mse(&y, &t)? * y.len() as f64;
        count += y.len();
    }
    Ok(total / count as f64)
}

/// Trains the network in place: `epochs` passes of shuffled minibatches,
/// L2 loss, SGD with the geometric learning-rate schedule. Deterministic in
/// `cfg.seed`. A non-finite loss aborts with [`CoreError::TrainAbort`].
///
/// `on_epoch` runs after every epoch (checkpointing, logging); its error
/// aborts training.
pub fn train(
    net: &mut Network,
    samples: &[TrainSample],
    val: Option<&[TrainSample]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Network) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CoreError::InvalidArgument("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport { epochs: Vec::new() };

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch as f64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut n_batches = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, t) = batch_of(samples, chunk)?;
            let (y, trace) = net.forward_cached(&x, true)?;
            let loss = mse(&y, &t)?;
            if !loss.is_finite() {
                return Err(CoreError::TrainAbort {
                    epoch,
                    step,
                    reason: format!("non-finite loss {loss}"),
                });
            }
            epoch_loss += loss;
            n_batches += 1;

            let scale = 2.0 / y.len() as f64;
            let mut grad_out = y.clone();
            for (g, &tv) in grad_out.data_mut().iter_mut().zip(t.data()) {
                *g = (*g - tv) * scale;
            }
            let (grads, _) = net.backward(&trace, &grad_out)?;
            net.update_running_stats(&trace);
            net.sgd_step(&grads, lr, cfg.weight_decay);
        }
        let train_loss = epoch_loss / n_batches as f64;
        let val_loss = match val {
            Some(v) if !v.is_empty() => Some(eval_loss(net, v, cfg.batch_size)?),
            _ => None,
        };
        let stats = EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        };
        on_epoch(&stats, net)?;
        report.epochs.push(stats);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{build_contracting, Variant};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_sample(seed: u64) -> TrainSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input = Tensor4::zeros(1, 3, 8, 12);
        for v in input.data_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        let mut target = Tensor4::zeros(1, 2, 1, 12);
        for v in target.data_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        TrainSample { input, target }
    }

    #[test]
    fn overfits_a_single_repeated_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut net = build_contracting(Variant::Focused, 3, 8, 2, 2, 4, &mut rng);
        let samples = vec![tiny_sample(1); 4];
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 4,
            lr_start: 3e-3,
            lr_end: 3e-4,
            weight_decay: 0.0,
            seed: 0,
        };
        let report = train(&mut net, &samples, None, &cfg, |_, _| Ok(())).unwrap();
        let losses = report.train_losses();
        assert_eq!(losses.len(), 200);
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last < 0.01 * first,
            "loss did not drop below 1% of initial: {first} -> {last}"
        );
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(20);
            let mut net = build_contracting(Variant::Focused, 3, 8, 2, 2, 4, &mut rng);
            let samples: Vec<TrainSample> = (0..6).map(tiny_sample).collect();
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 2,
                seed: 5,
                ..TrainConfig::default()
            };
            let report = train(&mut net, &samples, None, &cfg, |_, _| Ok(())).unwrap();
            (report.train_losses(), net.flat_params())
        };
        let (l1, p1) = run();
        let (l2, p2) = run();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn nan_loss_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut net = build_contracting(Variant::Focused, 3, 8, 2, 2, 4, &mut rng);
        // Massive learning rate to blow the parameters up.
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 2,
            lr_start: 1e12,
            lr_end: 1e11,
            weight_decay: 0.0,
            seed: 0,
        };
        let samples: Vec<TrainSample> = (0..4).map(tiny_sample).collect();
        let err = train(&mut net, &samples, None, &cfg, |_, _| Ok(()));
        assert!(matches!(err, Err(CoreError::TrainAbort { .. })));
    }

    #[test]
    fn val_loss_is_reported_when_requested() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut net = build_contracting(Variant::Focused, 3, 8, 2, 2, 4, &mut rng);
        let samples: Vec<TrainSample> = (0..4).map(tiny_sample).collect();
        let val: Vec<TrainSample> = (10..12).map(tiny_sample).collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            seed: 1,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &samples, Some(&val), &cfg, |_, _| Ok(())).unwrap();
        assert!(report.epochs.iter().all(|e| e.val_loss.is_some()));
    }
}
