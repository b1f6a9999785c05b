//! Mini-batch SGD with momentum, plateau-driven learning-rate decay, input
//! rescale estimation, and ensemble inference.

use super::arch::TrainConfig;
use super::forward::{forward_tape, gradient_with_stats, mix, softmax};
use super::params::{LayerParam, NetworkParams};
use super::scalar::Scalar;
use crate::error::{Error, Result};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Training samples used to estimate the input rescale constant, at most.
pub const RESCALE_SUBSAMPLE: usize = 10_000;

/// Input rescale constant: every input map is multiplied by `v` so that the
/// average per-map contrast `delta = mean(max - mean)` maps to
/// `exp(-v * delta) = 0.8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaleConstant {
    pub v: f64,
    pub delta: f64,
}

/// Estimate the rescale constant from input maps (pass the training
/// subsample, not the full set, for large corpora).
pub fn estimate_rescale<T: Scalar>(maps: &[&Array3<T>]) -> Result<RescaleConstant> {
    if maps.is_empty() {
        return Err(Error::Invalid("rescale estimation needs samples".into()));
    }
    let mut delta_sum = 0.0;
    for map in maps {
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in map.iter() {
            let v = v.to_f64();
            max = max.max(v);
            sum += v;
        }
        delta_sum += max - sum / map.len() as f64;
    }
    let delta = delta_sum / maps.len() as f64;
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::Degenerate(format!(
            "input contrast delta = {delta}; maps carry no signal"
        )));
    }
    Ok(RescaleConstant {
        v: -(0.8f64.ln()) / delta,
        delta,
    })
}

/// Outcome of feeding one epoch's training accuracy to the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauAction {
    Continue,
    Decayed,
    Stop,
}

/// Plateau schedule: when training accuracy has not improved for `patience`
/// consecutive epochs the learning rate is multiplied by `factor`; the run
/// stops when a plateau occurs after the rate has already been cut
/// `max_decays` times.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub learning_rate: f64,
    pub decays: usize,
    factor: f64,
    patience: usize,
    max_decays: usize,
    best: f64,
    streak: usize,
}

impl PlateauSchedule {
    pub fn new(learning_rate: f64, factor: f64, patience: usize, max_decays: usize) -> Self {
        Self {
            learning_rate,
            decays: 0,
            factor,
            patience,
            max_decays,
            best: f64::NEG_INFINITY,
            streak: 0,
        }
    }

    pub fn observe(&mut self, accuracy: f64) -> PlateauAction {
        if accuracy > self.best {
            self.best = accuracy;
            self.streak = 0;
            return PlateauAction::Continue;
        }
        self.streak += 1;
        if self.streak < self.patience {
            return PlateauAction::Continue;
        }
        if self.decays == self.max_decays {
            return PlateauAction::Stop;
        }
        self.learning_rate *= self.factor;
        self.decays += 1;
        self.streak = 0;
        PlateauAction::Decayed
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    /// Learning rate in effect during this epoch.
    pub learning_rate: f64,
    /// Decays applied before this epoch started.
    pub decays: usize,
}

/// Train in place. Estimates the input rescale constant from the first
/// `RESCALE_SUBSAMPLE` maps when the parameters still carry the initial 1.0
/// (a checkpoint resumed for further training keeps its frozen constant).
/// Returns one log entry per completed epoch.
pub fn fit<T: Scalar>(
    params: &mut NetworkParams<T>,
    maps: &[Array3<T>],
    labels: &[u32],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    fit_with(params, maps, labels, config, |_, _| {})
}

/// [`fit`] with a per-epoch observer, called with the parameters as they
/// stand at the end of each epoch (for held-out accuracy curves and such).
pub fn fit_with<T, F>(
    params: &mut NetworkParams<T>,
    maps: &[Array3<T>],
    labels: &[u32],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochLog>>
where
    T: Scalar,
    F: FnMut(&NetworkParams<T>, &EpochLog),
{
    config.validate()?;
    if maps.is_empty() || maps.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} maps with {} labels",
            maps.len(),
            labels.len()
        )));
    }
    if params.rescale == 1.0 {
        let subsample: Vec<&Array3<T>> = maps.iter().take(RESCALE_SUBSAMPLE).collect();
        params.rescale = estimate_rescale(&subsample)?.v;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0x73687566666c65));
    let mut velocity = params.zeros_like();
    let mut schedule = PlateauSchedule::new(
        config.learning_rate,
        config.decay_factor,
        config.patience,
        config.max_decays,
    );
    let momentum = T::from_f64(config.momentum);
    let n = maps.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut logs = Vec::new();

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let lr = schedule.learning_rate;
        let lr_t = T::from_f64(lr);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for (bi, idxs) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Array3<T>> = idxs.iter().map(|&i| &maps[i]).collect();
            let batch_labels: Vec<u32> = idxs.iter().map(|&i| labels[i]).collect();
            let seed = mix(config.seed, ((epoch as u64) << 32) | bi as u64);
            let (grads, stats) =
                gradient_with_stats(params, &batch, &batch_labels, seed, config.weight_decay)?;
            loss_sum += stats.mean_nll * batch.len() as f64;
            correct += stats.correct;
            sgd_step(&mut params.layers, &mut velocity, &grads, lr_t, momentum);
        }

        if let Some(layer) = params
            .layers
            .iter()
            .position(|l| !(l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())))
        {
            return Err(Error::NonFinite {
                layer: layer + 1,
                message: format!("weights diverged during epoch {}", epoch + 1),
            });
        }

        let accuracy = correct as f64 / n as f64;
        logs.push(EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / n as f64,
            train_accuracy: accuracy,
            learning_rate: lr,
            decays: schedule.decays,
        });
        on_epoch(params, logs.last().expect("just pushed"));
        if schedule.observe(accuracy) == PlateauAction::Stop {
            break;
        }
    }
    Ok(logs)
}

fn sgd_step<T: Scalar>(
    layers: &mut [LayerParam<T>],
    velocity: &mut [LayerParam<T>],
    grads: &[LayerParam<T>],
    lr: T,
    momentum: T,
) {
    for ((layer, vel), grad) in layers.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        vel.weight
            .zip_mut_with(&grad.weight, |v, &g| *v = *v * momentum - lr * g);
        vel.bias
            .zip_mut_with(&grad.bias, |v, &g| *v = *v * momentum - lr * g);
        layer.weight.zip_mut_with(&vel.weight, |w, &v| *w = *w + v);
        layer.bias.zip_mut_with(&vel.bias, |b, &v| *b = *b + v);
    }
}

/// Average the ensemble's probability vectors for one map.
fn ensemble_probs<T: Scalar>(
    nets: &[&NetworkParams<T>],
    map: &Array3<T>,
) -> Result<Vec<f64>> {
    let first = nets
        .first()
        .ok_or_else(|| Error::Invalid("empty ensemble".into()))?;
    let classes = first.arch.classes;
    for net in nets {
        if net.arch.classes != classes
            || net.arch.input_planes != first.arch.input_planes
            || net.arch.input_size != first.arch.input_size
        {
            return Err(Error::Dimension(
                "ensemble members disagree on input or output shape".into(),
            ));
        }
    }
    let mut acc = vec![0.0f64; classes];
    for net in nets {
        let tape = forward_tape(net, map, None)?;
        let probs = softmax(&tape.logits);
        for (a, &p) in acc.iter_mut().zip(probs.iter()) {
            *a += p.to_f64();
        }
    }
    let k = nets.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// Top `n` classes by ensemble-averaged probability, ties resolved toward
/// the lower class index.
pub fn top_n<T: Scalar>(
    nets: &[&NetworkParams<T>],
    map: &Array3<T>,
    n: usize,
) -> Result<Vec<(u32, f64)>> {
    let probs = ensemble_probs(nets, map)?;
    let mut ranked: Vec<(u32, f64)> = probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as u32, p))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

/// Ensemble prediction: class with the highest averaged probability.
pub fn predict<T: Scalar>(nets: &[&NetworkParams<T>], map: &Array3<T>) -> Result<u32> {
    Ok(top_n(nets, map, 1)?[0].0)
}
