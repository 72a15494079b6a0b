use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{class_indices, PretrainConfig};
use crate::attack::{AdamConfig, AdamState};
use crate::data::Cifar10Record;
use crate::error::{Error, Result};
use crate::net::{backward, forward, NetworkSpec, WeightSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean cross-entropy over the training set after the epoch.
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub weights: WeightSet,
    pub curve: Vec<EpochLoss>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Splits `pool` into train and test sets of the configured classes, skipping
/// any image equal to one of `exclude`.
pub fn select_training_data(
    pool: &[Cifar10Record],
    cfg: &PretrainConfig,
    exclude: &[&[f64]],
) -> Result<(Vec<Cifar10Record>, Vec<Cifar10Record>)> {
    let classes = class_indices(&cfg.classes)?;
    let mut kept = pool
        .iter()
        .filter(|r| classes.contains(&r.label) && !exclude.contains(&r.pixels.as_slice()))
        .cloned();
    let train: Vec<_> = kept.by_ref().take(cfg.train_images).collect();
    let test: Vec<_> = kept.take(cfg.test_images).collect();
    if train.is_empty() {
        return Err(Error::Config("no training images of the requested classes".into()));
    }
    Ok((train, test))
}

fn flatten(w: &WeightSet) -> Vec<f64> {
    w.layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter().flatten()))
        .copied()
        .collect()
}

fn unflatten(w: &mut WeightSet, flat: &[f64]) {
    let mut k = 0;
    for l in &mut w.layers {
        for v in l.weight.iter_mut().chain(l.bias.iter_mut().flatten()) {
            *v = flat[k];
            k += 1;
        }
    }
}

/// Mean cross-entropy of `data`.
pub fn mean_loss(spec: &NetworkSpec, weights: &WeightSet, data: &[Cifar10Record]) -> Result<f64> {
    let mut total = 0.0;
    for r in data {
        total += forward(spec, weights, &r.pixels)?.loss(r.label as usize)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Mini-batch Adam on softmax cross-entropy, shuffling each epoch with `seed`.
pub fn pretrain(
    spec: &NetworkSpec,
    init: &WeightSet,
    train: &[Cifar10Record],
    test: &[Cifar10Record],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    class_indices(&cfg.classes)?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::Config("learning_rate must be positive".into()));
    }
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    init.validate(spec)?;
    let mut weights = init.clone();
    let mut flat = flatten(&weights);
    let mut adam = AdamState::new(flat.len(), AdamConfig::with_step(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; flat.len()];
            for &i in batch {
                let r = &train[i];
                let trace = forward(spec, &weights, &r.pixels)?;
                let g = backward(spec, &weights, &trace, r.label as usize)?;
                let parts = g.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter().flatten()));
                for (acc, v) in grad.iter_mut().zip(parts) {
                    *acc += v / batch.len() as f64;
                }
            }
            adam.step(&mut flat, &grad);
            unflatten(&mut weights, &flat);
        }
        curve.push(EpochLoss {
            epoch,
            train_loss: mean_loss(spec, &weights, train)?,
            test_loss: if test.is_empty() {
                None
            } else {
                Some(mean_loss(spec, &weights, test)?)
            },
        });
    }
    Ok(PretrainOutcome {
        weights,
        curve,
        train_size: train.len(),
        test_size: test.len(),
    })
}
