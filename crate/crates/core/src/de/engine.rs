use rand::seq::index;

use crate::de::config::DeConfig;
use crate::de::divergence::{DivergenceLoss, DivergenceSpec};
use crate::error::{Error, Result};
use crate::nn::{epoch_order, Network};
use crate::par::Executor;
use crate::rng;
use crate::sparsity::{CandidateSet, Scope, SparsityMask};
use crate::tensor::Tensor;

const PROPOSE: u64 = 0xDE01;
const RETRAIN: u64 = 0xDE02;

/// One trial's candidate and the divergence measured with it zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEval {
    pub candidate: CandidateSet,
    pub divergence: f64,
}

/// Statistics of one committed cycle on one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Flat parameter-tensor index.
    pub tensor: usize,
    pub trial_divergences: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `trial_divergences`.
    pub std: f64,
    pub best_index: usize,
    pub best_divergence: f64,
    pub committed: CandidateSet,
    /// Positions of `committed` that were not already pruned.
    pub new_zeros: usize,
    pub sparsity_before: f64,
    pub sparsity_after: f64,
    /// Divergence after the sweep's retraining, or after the commit when
    /// retraining is off.
    pub retrain_divergence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    TargetReached,
    /// The last sweep pushed divergence over budget and was rolled back.
    BudgetExceeded,
    CycleLimit,
}

#[derive(Debug, Clone)]
pub struct DeOutcome {
    pub student: Network,
    pub mask: SparsityMask,
    pub history: Vec<CycleRecord>,
    pub status: RunStatus,
    /// Sweeps kept in `history`.
    pub cycles: usize,
}

/// Mean and population standard deviation.
pub fn trial_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `trials_per_cycle` random candidates for one tensor. Indices are drawn
/// without replacement from the whole tensor, pruned positions included.
pub fn propose_candidates(
    mask: &SparsityMask,
    tensor: usize,
    cfg: &DeConfig,
    cycle: usize,
) -> Result<Vec<CandidateSet>> {
    if tensor >= mask.tensors().len() {
        return Err(Error::InvalidArgument(format!("no parameter tensor {tensor}")));
    }
    let len = mask.total(Scope::Tensor(tensor));
    let k = cfg.candidate_size(len);
    if k > len || !(cfg.step_fraction > 0.0 && cfg.step_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step of {k} exceeds tensor {tensor} of {len} parameters"
        )));
    }
    Ok((0..cfg.trials_per_cycle)
        .map(|trial| {
            let mut r = rng::stream(
                cfg.master_seed,
                &[PROPOSE, cycle as u64, tensor as u64, trial as u64],
            );
            CandidateSet::new(tensor, index::sample(&mut r, len, k).into_vec())
        })
        .collect())
}

fn zeroed(student: &Network, mask: Option<&SparsityMask>, cand: &CandidateSet) -> Result<Network> {
    let mut net = student.clone();
    if let Some(m) = mask {
        m.apply(&mut net)?;
    }
    let t = net
        .param_mut(cand.tensor())
        .ok_or_else(|| Error::InvalidArgument(format!("no parameter tensor {}", cand.tensor())))?;
    let len = t.len();
    let data = t.data_mut();
    for &i in cand.indices() {
        if i >= len {
            return Err(Error::InvalidArgument(format!(
                "candidate index {i} outside tensor of {len}"
            )));
        }
        data[i] = 0.0;
    }
    Ok(net)
}

/// Divergence of the student with `mask ∪ cand` zeroed. Works on a scratch
/// copy; `student` is untouched.
pub fn evaluate_candidate(
    student: &Network,
    mask: &SparsityMask,
    cand: &CandidateSet,
    teacher_outputs: &Tensor,
    probe: &Tensor,
    spec: &DivergenceSpec,
) -> Result<f64> {
    mask.check_network(student)?;
    let net = zeroed(student, Some(mask), cand)?;
    spec.divergence(&net.forward(probe)?, teacher_outputs)
}

/// Commits the least-divergent trial (lowest index on ties) into `mask`.
/// `retrain_divergence` of the returned record holds the committed
/// divergence until retraining overwrites it.
pub fn select_and_commit(
    cycle: usize,
    trials: Vec<TrialEval>,
    mask: &mut SparsityMask,
) -> Result<(CandidateSet, CycleRecord)> {
    if trials.is_empty() {
        return Err(Error::Empty("no trials to select from".into()));
    }
    let divs: Vec<f64> = trials.iter().map(|t| t.divergence).collect();
    let mut best = 0;
    for (i, &d) in divs.iter().enumerate() {
        if d < divs[best] {
            best = i;
        }
    }
    let (mean, std) = trial_stats(&divs);
    let committed = trials.into_iter().nth(best).unwrap().candidate;
    let tensor = committed.tensor();
    let before = mask.sparsity(Scope::Tensor(tensor));
    let new_zeros = mask.merge_in_place(&committed)?;
    let record = CycleRecord {
        cycle,
        tensor,
        best_index: best,
        best_divergence: divs[best],
        retrain_divergence: divs[best],
        trial_divergences: divs,
        mean,
        std,
        committed: committed.clone(),
        new_zeros,
        sparsity_before: before,
        sparsity_after: mask.sparsity(Scope::Tensor(tensor)),
    };
    Ok((committed, record))
}

/// Mini-batch SGD of the student towards the cached teacher outputs,
/// keeping pruned positions at zero. Returns the lowest-divergence
/// parameters seen (the starting point included) and their divergence.
pub fn retrain(
    student: &Network,
    mask: &SparsityMask,
    teacher_outputs: &Tensor,
    probe: &Tensor,
    spec: &DivergenceSpec,
    cfg: &DeConfig,
    cycle: usize,
) -> Result<(Network, f64)> {
    let mut net = mask.applied(student)?;
    let mut best_div = spec.divergence(&net.forward(probe)?, teacher_outputs)?;
    if cfg.retrain_epochs == 0 {
        return Ok((student.clone(), best_div));
    }
    if cfg.retrain_batch_size == 0 {
        return Err(Error::InvalidArgument("retrain_batch_size must be >= 1".into()));
    }
    let mut best = net.clone();
    let n = probe.rows();
    for epoch in 0..cfg.retrain_epochs {
        let order = epoch_order(
            n,
            cfg.master_seed,
            &[RETRAIN, cycle as u64, epoch as u64],
        );
        for chunk in order.chunks(cfg.retrain_batch_size) {
            let x = probe.select_rows(chunk)?;
            let t = teacher_outputs.select_rows(chunk)?;
            let loss = DivergenceLoss { spec, teacher: &t };
            let (_, grads) = net.loss_and_gradients(&x, &loss)?;
            net.sgd_step(&grads, cfg.retrain_lr, Some(mask))?;
        }
        let d = spec.divergence(&net.forward(probe)?, teacher_outputs)?;
        if d < best_div {
            best_div = d;
            best = net.clone();
        }
    }
    Ok((best, best_div))
}

/// Teacher–student directed evolution. Each sweep visits the in-scope
/// tensors that are still below target, commits one candidate per tensor
/// and then retrains once.
pub fn run(
    teacher: &Network,
    probe: &Tensor,
    cfg: &DeConfig,
    spec: &DivergenceSpec,
) -> Result<DeOutcome> {
    run_with(teacher, probe, cfg, spec, &Executor::new(cfg.workers)?)
}

/// [`run`] on a caller-supplied executor.
pub fn run_with(
    teacher: &Network,
    probe: &Tensor,
    cfg: &DeConfig,
    spec: &DivergenceSpec,
    exec: &Executor,
) -> Result<DeOutcome> {
    cfg.validate()?;
    if probe.rows() == 0 {
        return Err(Error::Empty("probe set".into()));
    }
    spec.validate(teacher.output_len())?;
    let scope = cfg.scope_for(teacher)?;
    let teacher_outputs = teacher.forward(probe)?;

    let mut student = teacher.clone();
    let mut mask = SparsityMask::empty(teacher);
    let mut history = Vec::new();
    let below = |mask: &SparsityMask, t: usize| {
        mask.sparsity(Scope::Tensor(t)) < cfg.target_for(t) - 1e-12
    };

    let mut cycle = 0;
    let status = loop {
        let pending: Vec<usize> = scope.iter().copied().filter(|&t| below(&mask, t)).collect();
        if pending.is_empty() {
            break RunStatus::TargetReached;
        }
        if cycle >= cfg.max_cycles {
            break RunStatus::CycleLimit;
        }
        let prev = (student.clone(), mask.clone());
        let mut sweep = Vec::with_capacity(pending.len());
        for &t in &pending {
            let cands = propose_candidates(&mask, t, cfg, cycle)?;
            let divs = exec.try_map(cands.len(), |i| {
                let net = zeroed(&student, None, &cands[i])?;
                spec.divergence(&net.forward(probe)?, &teacher_outputs)
            })?;
            let trials = cands
                .into_iter()
                .zip(divs)
                .map(|(candidate, divergence)| TrialEval { candidate, divergence })
                .collect();
            let (committed, record) = select_and_commit(cycle, trials, &mut mask)?;
            let p = student.param_mut(t).unwrap().data_mut();
            for &i in committed.indices() {
                p[i] = 0.0;
            }
            sweep.push(record);
        }
        let (retrained, div) = retrain(&student, &mask, &teacher_outputs, probe, spec, cfg, cycle)?;
        student = retrained;
        if cfg.divergence_budget.is_some_and(|b| div > b) {
            (student, mask) = prev;
            break RunStatus::BudgetExceeded;
        }
        for r in &mut sweep {
            r.retrain_divergence = div;
        }
        history.extend(sweep);
        cycle += 1;
    };
    Ok(DeOutcome {
        student,
        mask,
        history,
        status,
        cycles: cycle,
    })
}
