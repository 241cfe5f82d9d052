use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use devolve_core::codec::{compression_report, load_mask, save_mask, PackedModel};
use devolve_core::data::{subset, synthetic_dataset, ProbeSet};
use devolve_core::de::{self, history, trial_stats, RunStatus};
use devolve_core::nn::{self, serialize, LossKind, Network};
use devolve_core::par::Executor;
use devolve_core::quantizer::{quantize_network, EvalSet, QuantizedModel};
use devolve_core::rng::derive_seed;
use devolve_core::sparsity::Scope;

use crate::config::RunConfig;
use crate::CliError;

const BUILD: u64 = 0xB17D;
const PROBE: u64 = 0x9B0E;

/// `(train, eval)`; with no holdout both are the full set.
fn splits(cfg: &RunConfig) -> Result<(ProbeSet, ProbeSet), CliError> {
    let d = &cfg.data;
    let set = match (&d.synthetic, &d.images) {
        (Some(spec), _) => synthetic_dataset(spec)?,
        (None, Some(images)) => ProbeSet::from_idx(images, d.labels.as_deref())?,
        (None, None) => unreachable!("validated"),
    };
    if d.holdout == 0 {
        return Ok((set.clone(), set));
    }
    if d.holdout >= set.len() {
        return Err(CliError::Validation(format!(
            "data.holdout {} leaves no training samples out of {}",
            d.holdout,
            set.len()
        )));
    }
    Ok(set.split(d.holdout)?)
}

fn accuracy(net: &Network, set: &ProbeSet) -> Result<Option<f64>, CliError> {
    match &set.labels {
        Some(l) => Ok(Some(net.accuracy(&set.inputs, l)?)),
        None => Ok(None),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|a| format!("{a:.6}")).unwrap_or_else(|| "n/a".into())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<Network, CliError> {
    serialize::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let arch = cfg
        .model
        .architecture
        .as_ref()
        .ok_or_else(|| CliError::Validation("train needs model.architecture".into()))?;
    let (train_set, eval_set) = splits(cfg)?;
    train_set.labels()?;
    let mut net = arch.build(derive_seed(cfg.master_seed, &[BUILD]))?;
    let losses = nn::train(&mut net, &train_set.to_batch(), LossKind::CrossEntropy, &cfg.train, None)?;
    let out = cfg.output.resolve(&cfg.output.teacher);
    ensure_parent(&out)?;
    serialize::save(&net, &out)?;
    println!(
        "train: params={} epochs={} final_loss={} train_accuracy={} eval_accuracy={} model={}",
        net.param_count(),
        losses.len(),
        losses.last().map(|l| format!("{l:.6}")).unwrap_or_else(|| "n/a".into()),
        fmt_opt(accuracy(&net, &train_set)?),
        fmt_opt(accuracy(&net, &eval_set)?),
        out.display()
    );
    Ok(())
}

pub fn sparsify(cfg: &RunConfig) -> Result<(), CliError> {
    let teacher = load_net(&cfg.teacher_path())?;
    let (train_set, eval_set) = splits(cfg)?;
    let k = cfg.data.probe_size.min(train_set.len());
    let probe = subset(&train_set, k, derive_seed(cfg.master_seed, &[PROBE]))?;
    let spec = cfg.divergence_spec(teacher.output_len());
    spec.validate(teacher.output_len())
        .map_err(|e| CliError::Validation(format!("divergence: {e}")))?;
    let exec = Executor::new(cfg.de.workers)?;
    let outcome = de::run_with(&teacher, &probe.inputs, &cfg.de, &spec, &exec)?;

    let o = &cfg.output;
    let (student, mask, hist) = (o.resolve(&o.student), o.resolve(&o.mask), o.resolve(&o.history));
    for p in [&student, &mask, &hist] {
        ensure_parent(p)?;
    }
    serialize::save(&outcome.student, &student)?;
    save_mask(&outcome.mask, &mask)?;
    history::write_history(&outcome.history, &hist)?;

    let status = match outcome.status {
        RunStatus::TargetReached => "target_reached",
        RunStatus::BudgetExceeded => "budget_exceeded",
        RunStatus::CycleLimit => "cycle_limit",
    };
    let divergence = spec.divergence(&outcome.student.forward(&probe.inputs)?, &teacher.forward(&probe.inputs)?)?;
    println!(
        "sparsify: status={status} cycles={} rows={} sparsity={:.6} divergence={divergence:.6e} \
         teacher_accuracy={} student_accuracy={}",
        outcome.cycles,
        outcome.history.len(),
        outcome.mask.sparsity(Scope::Network),
        fmt_opt(accuracy(&teacher, &eval_set)?),
        fmt_opt(accuracy(&outcome.student, &eval_set)?),
    );
    let scope = cfg.de.scope_for(&teacher)?;
    for t in scope {
        println!("  tensor {t}: sparsity={:.6}", outcome.mask.sparsity(Scope::Tensor(t)));
    }
    println!("  wrote {} {} {}", student.display(), mask.display(), hist.display());
    Ok(())
}

pub fn quantize(cfg: &RunConfig) -> Result<(), CliError> {
    let o = &cfg.output;
    let student = load_net(&o.resolve(&o.student))?;
    let mask = load_mask(o.resolve(&o.mask))?;
    let (_, eval_set) = splits(cfg)?;
    let eval = EvalSet {
        inputs: &eval_set.inputs,
        labels: eval_set.labels.as_deref(),
    };
    let (model, _, report) = quantize_network(&student, &mask, &cfg.quantization, Some(eval))?;
    let (qpath, rpath) = (o.resolve(&o.quantized), o.resolve(&o.quant_report));
    ensure_parent(&qpath)?;
    ensure_parent(&rpath)?;
    model.save(&qpath)?;
    let json = serde_json::to_string_pretty(&report).map_err(devolve_core::Error::from)?;
    std::fs::write(&rpath, json + "\n").map_err(devolve_core::Error::from)?;
    println!(
        "quantize: tensors={} accuracy_before={} accuracy_after={} accuracy_delta={} divergence={}",
        report.tensors.len(),
        fmt_opt(report.accuracy_before),
        fmt_opt(report.accuracy_after),
        fmt_opt(report.accuracy_delta()),
        report.divergence.map(|d| format!("{d:.6e}")).unwrap_or_else(|| "n/a".into()),
    );
    for t in &report.tensors {
        println!(
            "  tensor {}: scheme={:?} bits={} levels={} survivors={} mean_abs_error={:.3e} max_abs_error={:.3e}",
            t.tensor, t.scheme, t.bits, t.levels, t.survivors, t.mean_abs_error, t.max_abs_error
        );
    }
    Ok(())
}

pub fn pack(cfg: &RunConfig) -> Result<(), CliError> {
    let o = &cfg.output;
    let model = QuantizedModel::load(o.resolve(&o.quantized))?;
    let packed = PackedModel::pack_with(&model, &Executor::new(cfg.de.workers)?)?;
    let path = o.resolve(&o.packed);
    ensure_parent(&path)?;
    packed.save(&path)?;
    let reference = load_net(&o.resolve(&o.student))?;
    let r = compression_report(&reference, &packed)?;
    println!(
        "pack: params={} bytes={} payload_bits={} payload_ratio={:.3} total_ratio={:.3} file={}",
        r.params,
        packed.bytes().len(),
        r.payload_bits,
        r.payload_ratio,
        r.total_ratio,
        path.display()
    );
    for (i, l) in packed.layers().iter().enumerate() {
        println!(
            "  layer {i}: params={} survivors={} mask={:?}/{}B lut={}B table={}B payload={}b",
            l.params, l.survivors, l.mask_encoding, l.mask_bytes, l.lut_bytes, l.table_bytes, l.payload_bits
        );
    }
    Ok(())
}

/// Architecture donor for packed and quantized files, which store shapes
/// only: the student if present, else the teacher.
fn template(cfg: &RunConfig) -> Result<Network, CliError> {
    let student = cfg.output.resolve(&cfg.output.student);
    if student.exists() {
        load_net(&student)
    } else {
        load_net(&cfg.teacher_path())
    }
}

pub fn unpack(cfg: &RunConfig) -> Result<(), CliError> {
    let o = &cfg.output;
    let packed = PackedModel::load(o.resolve(&o.packed))?;
    let net = packed.unpack()?.to_network(&template(cfg)?)?;
    let path = o.resolve(&o.restored);
    ensure_parent(&path)?;
    serialize::save(&net, &path)?;
    println!("unpack: tensors={} params={} model={}", packed.layers().len(), net.param_count(), path.display());
    Ok(())
}

/// Any model artifact, recognised by content: DEVN, DEVP, or a DEVQ JSON
/// document.
fn load_any(cfg: &RunConfig, path: &Path) -> Result<(Network, &'static str), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let at = |e: devolve_core::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    if bytes.starts_with(serialize::MODEL_MAGIC) {
        return Ok((serialize::from_bytes(&bytes).map_err(at)?, "devn"));
    }
    if bytes.starts_with(b"DEVP") {
        let q = PackedModel::from_bytes(bytes).map_err(at)?.unpack().map_err(at)?;
        return Ok((q.to_network(&template(cfg)?).map_err(at)?, "devp"));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Runtime(format!("{}: unrecognised model format", path.display())))?;
    let q = QuantizedModel::from_json(&text).map_err(at)?;
    Ok((q.to_network(&template(cfg)?).map_err(at)?, "devq"))
}

pub fn eval(cfg: &RunConfig, model: Option<PathBuf>, teacher: Option<PathBuf>) -> Result<(), CliError> {
    let o = &cfg.output;
    let path = model.unwrap_or_else(|| o.resolve(&o.student));
    let (net, kind) = load_any(cfg, &path)?;
    let (_, eval_set) = splits(cfg)?;
    let teacher_path = teacher.unwrap_or_else(|| cfg.teacher_path());
    let divergence = if teacher_path.exists() {
        let t = load_net(&teacher_path)?;
        let spec = cfg.divergence_spec(t.output_len());
        Some(spec.divergence(&net.forward(&eval_set.inputs)?, &t.forward(&eval_set.inputs)?)?)
    } else {
        None
    };
    println!(
        "eval: model={} format={kind} samples={} accuracy={} divergence={}",
        path.display(),
        eval_set.len(),
        fmt_opt(accuracy(&net, &eval_set)?),
        divergence.map(|d| format!("{d:.6e}")).unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

/// Per-cycle table of the history CSV. When the trial sidecar exists,
/// every row's mean, σ and best are recomputed from it and must agree.
pub fn report(history_path: &Path) -> Result<(), CliError> {
    let rows = history::read_history(history_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", history_path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("{}: history is empty", history_path.display())));
    }
    let mut last: BTreeMap<usize, f64> = BTreeMap::new();
    for r in &rows {
        let prev = last.insert(r.layer, r.sparsity_after).unwrap_or(0.0);
        if r.sparsity_after < prev || r.sparsity_after < r.sparsity_before {
            return Err(CliError::Runtime(format!(
                "sparsity of layer {} decreases at cycle {}",
                r.layer, r.cycle
            )));
        }
    }
    let sidecar = history::trials_path(history_path);
    let checked = if sidecar.exists() {
        let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for t in history::read_trials(history_path)? {
            groups.entry((t.cycle, t.layer)).or_default().push(t.divergence);
        }
        for r in &rows {
            let vals = groups.get(&(r.cycle, r.layer)).ok_or_else(|| {
                CliError::Runtime(format!("no trials for cycle {} layer {}", r.cycle, r.layer))
            })?;
            let (mean, std) = trial_stats(vals);
            let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
            if vals.len() != r.trials || !close(mean, r.mean) || !close(std, r.std) || !close(best, r.best) {
                return Err(CliError::Runtime(format!(
                    "cycle {} layer {}: stored statistics disagree with the trial sidecar",
                    r.cycle, r.layer
                )));
            }
        }
        true
    } else {
        false
    };
    println!(
        "{:>5} {:>5} {:>9} {:>13} {:>13} {:>13} {:>7} {:>13}",
        "cycle", "layer", "sparsity", "mean", "std", "best", "z", "retrain"
    );
    for r in &rows {
        let z = if r.std > 0.0 { (r.mean - r.best) / r.std } else { 0.0 };
        println!(
            "{:>5} {:>5} {:>9.4} {:>13.6e} {:>13.6e} {:>13.6e} {:>7.2} {:>13.6e}",
            r.cycle, r.layer, r.sparsity_after, r.mean, r.std, r.best, z, r.retrain_divergence
        );
    }
    println!(
        "report: rows={} layers={} trials_checked={checked}",
        rows.len(),
        last.len()
    );
    Ok(())
}
