use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{Batch, LossKind};
use crate::nn::network::Network;
use crate::rng;
use crate::sparsity::SparsityMask;

/// Mini-batch SGD settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Seeded shuffle of `0..n` for one epoch.
pub(crate) fn epoch_order(n: usize, seed: u64, path: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, path));
    order
}

/// Mini-batch SGD on a labelled batch. Returns the mean training loss of
/// each epoch.
pub fn train(
    net: &mut Network,
    data: &Batch,
    loss: LossKind,
    cfg: &TrainConfig,
    mask: Option<&SparsityMask>,
) -> Result<Vec<f64>> {
    if data.targets.is_none() {
        return Err(Error::MissingTargets("training data has no targets".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), cfg.seed, &[0x7121, epoch as u64]);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mb = data.select(chunk)?;
            let targets = mb.targets.as_ref().unwrap();
            let l = crate::nn::loss::TargetLoss {
                kind: loss,
                targets,
            };
            let (value, grads) = net.loss_and_gradients(&mb.inputs, &l)?;
            net.sgd_step(&grads, cfg.lr, mask)?;
            total += value * chunk.len() as f64;
        }
        history.push(total / data.len() as f64);
    }
    Ok(history)
}
