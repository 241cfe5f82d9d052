use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, ParamRole};

/// Settings for a directed-evolution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    /// Random candidate sets evaluated per cycle and tensor.
    pub trials_per_cycle: usize,
    /// Nominal candidate size as a fraction of the tensor's parameter count.
    pub step_fraction: f64,
    /// Sparsity each in-scope tensor must reach.
    pub target_sparsity: f64,
    /// Per-tensor overrides of `target_sparsity`, keyed by flat tensor index.
    pub layer_targets: BTreeMap<usize, f64>,
    /// Stop (reverting the offending sweep) once divergence exceeds this.
    pub divergence_budget: Option<f64>,
    pub retrain_epochs: usize,
    pub retrain_lr: f64,
    pub retrain_batch_size: usize,
    pub master_seed: u64,
    /// Flat parameter-tensor indices under evolution. `None` selects every
    /// weight tensor, plus biases when `include_biases` is set.
    pub scope: Option<Vec<usize>>,
    pub include_biases: bool,
    /// Hard cap on sweeps, guarding against targets the shrinking effective
    /// step can no longer reach in reasonable time.
    pub max_cycles: usize,
    /// Trial-evaluation workers; 0 picks the machine default.
    pub workers: usize,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            trials_per_cycle: 120,
            step_fraction: 0.05,
            target_sparsity: 0.8,
            layer_targets: BTreeMap::new(),
            divergence_budget: None,
            retrain_epochs: 0,
            retrain_lr: 0.01,
            retrain_batch_size: 32,
            master_seed: 0,
            scope: None,
            include_biases: false,
            max_cycles: 10_000,
            workers: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cycle == 0 {
            return Err(Error::InvalidArgument("trials_per_cycle must be >= 1".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step_fraction {} outside (0, 1]",
                self.step_fraction
            )));
        }
        for t in std::iter::once(&self.target_sparsity).chain(self.layer_targets.values()) {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::InvalidArgument(format!("target sparsity {t} outside [0, 1]")));
            }
        }
        if self.retrain_epochs > 0 && !(self.retrain_lr > 0.0) {
            return Err(Error::InvalidArgument("retrain_lr must be positive".into()));
        }
        if self.retrain_batch_size == 0 {
            return Err(Error::InvalidArgument("retrain_batch_size must be >= 1".into()));
        }
        if let Some(b) = self.divergence_budget {
            if !(b >= 0.0) {
                return Err(Error::InvalidArgument(format!("divergence_budget {b} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Tensors under evolution for `net`, in flat order.
    pub fn scope_for(&self, net: &Network) -> Result<Vec<usize>> {
        let infos = net.param_infos();
        match &self.scope {
            Some(s) => {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                if let Some(&bad) = s.iter().find(|&&t| t >= infos.len()) {
                    return Err(Error::InvalidArgument(format!(
                        "scope names tensor {bad}, network has {}",
                        infos.len()
                    )));
                }
                Ok(s)
            }
            None => Ok(infos
                .iter()
                .enumerate()
                .filter(|(_, p)| self.include_biases || p.role == ParamRole::Weight)
                .map(|(i, _)| i)
                .collect()),
        }
    }

    pub fn target_for(&self, tensor: usize) -> f64 {
        self.layer_targets
            .get(&tensor)
            .copied()
            .unwrap_or(self.target_sparsity)
    }

    /// Nominal candidate size for a tensor of `len` parameters:
    /// `ceil(step_fraction × len)`, ignoring float noise at exact integers.
    pub fn candidate_size(&self, len: usize) -> usize {
        let raw = self.step_fraction * len as f64;
        if (raw - raw.round()).abs() < 1e-9 {
            raw.round() as usize
        } else {
            raw.ceil() as usize
        }
    }
}
