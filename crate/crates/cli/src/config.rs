//! Run configuration: a JSON document with `--set` overrides applied on top,
//! validated before any command does work.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use devolve_core::data::SyntheticSpec;
use devolve_core::de::{DeConfig, DivergenceSpec};
use devolve_core::nn::{Architecture, TrainConfig};
use devolve_core::quantizer::{QuantConfig, Scheme};
use devolve_core::rng::derive_seed;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub de: DeConfig,
    /// Plain MSE over all outputs when absent.
    #[serde(default)]
    pub divergence: Option<DivergenceSpec>,
    #[serde(default)]
    pub quantization: QuantConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Needed by `train`.
    pub architecture: Option<Architecture>,
    /// Existing teacher to use instead of `output.teacher`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub synthetic: Option<SyntheticSpec>,
    pub images: Option<String>,
    pub labels: Option<String>,
    /// Trailing samples held out for evaluation; 0 evaluates on the
    /// training samples.
    #[serde(default)]
    pub holdout: usize,
    #[serde(default = "default_probe")]
    pub probe_size: usize,
}

fn default_probe() -> usize {
    1024
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Relative artifact paths resolve against this directory.
    pub dir: PathBuf,
    pub teacher: PathBuf,
    pub student: PathBuf,
    pub mask: PathBuf,
    pub history: PathBuf,
    pub quantized: PathBuf,
    pub quant_report: PathBuf,
    pub packed: PathBuf,
    pub restored: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("."),
            teacher: "teacher.devn".into(),
            student: "student.devn".into(),
            mask: "student.devm".into(),
            history: "history.csv".into(),
            quantized: "quantized.devq".into(),
            quant_report: "quant_report.json".into(),
            packed: "model.devp".into(),
            restored: "restored.devn".into(),
        }
    }
}

impl OutputSection {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }
}

impl RunConfig {
    pub fn teacher_path(&self) -> PathBuf {
        match &self.model.path {
            Some(p) => p.clone(),
            None => self.output.resolve(&self.output.teacher),
        }
    }

    pub fn divergence_spec(&self, outputs: usize) -> DivergenceSpec {
        self.divergence.clone().unwrap_or_else(|| DivergenceSpec::mse(outputs))
    }
}

/// Reads `path`, applies `sets` (`a.b=value`) and `workers`, derives unset
/// seeds from `master_seed`, then validates.
pub fn load(path: &Path, sets: &[String], workers: Option<usize>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    for s in sets {
        apply_set(&mut doc, s)?;
    }
    if let Some(w) = workers {
        apply_set(&mut doc, &format!("de.workers={w}"))?;
    }
    from_value(doc)
}

pub fn from_value(doc: Value) -> Result<RunConfig, CliError> {
    let explicit = |section: &str, key: &str| doc.get(section).and_then(|s| s.get(key)).is_some();
    let seeded = [
        ("train", explicit("train", "seed")),
        ("de", explicit("de", "master_seed")),
        ("quantization", explicit("quantization", "seed")),
    ];
    let mut cfg: RunConfig =
        serde_json::from_value(doc).map_err(|e| CliError::Validation(format!("config: {e}")))?;
    let m = cfg.master_seed;
    for (i, (section, set)) in seeded.into_iter().enumerate() {
        if set {
            continue;
        }
        let seed = derive_seed(m, &[0xC0F1, i as u64]);
        match section {
            "train" => cfg.train.seed = seed,
            "de" => cfg.de.master_seed = seed,
            _ => cfg.quantization.seed = seed,
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

/// `a.b.c=value`: the value parses as JSON, or is taken as a string.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("bad --set key {key:?}")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("--set {key}: {part} is not an object")))?;
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Validation(format!("--set {key}: parent is not an object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Validation(msg));
    let d = &cfg.data;
    match (&d.synthetic, &d.images) {
        (Some(_), Some(_)) => return bad("data: give either synthetic or images, not both".into()),
        (None, None) => return bad("data: one of synthetic or images is required".into()),
        _ => {}
    }
    if d.labels.is_some() && d.images.is_none() {
        return bad("data.labels given without data.images".into());
    }
    if d.probe_size == 0 {
        return bad("data.probe_size must be >= 1".into());
    }
    if cfg.train.batch_size == 0 {
        return bad("train.batch_size must be >= 1".into());
    }
    if !(cfg.train.lr > 0.0 && cfg.train.lr.is_finite()) {
        return bad("train.lr must be positive".into());
    }
    cfg.de.validate().map_err(|e| CliError::Validation(format!("de: {e}")))?;
    let q = &cfg.quantization;
    let mut all = vec![(None, q.scheme, q.bits)];
    all.extend(q.overrides.iter().map(|(&t, o)| (Some(t), o.scheme, o.bits)));
    for (t, scheme, bits) in all {
        let ok = match scheme {
            Scheme::Identity => true,
            Scheme::UniformScale => (2..=16).contains(&bits),
            _ => (1..=16).contains(&bits),
        };
        if !ok {
            let at = t.map(|t| format!(" (tensor {t})")).unwrap_or_default();
            return bad(format!("quantization{at}: {bits} bits not supported by {scheme:?}"));
        }
    }
    if let Some(spec) = &cfg.divergence {
        if spec.heads.is_empty() {
            return bad("divergence needs at least one head".into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({"data": {"synthetic": {"kind": "blobs", "n": 100, "classes": 3, "seed": 1}}})
    }

    #[test]
    fn set_creates_nested_keys() {
        let mut v = base();
        apply_set(&mut v, "de.trials_per_cycle=1000").unwrap();
        apply_set(&mut v, "output.dir=runs/a").unwrap();
        assert_eq!(v["de"]["trials_per_cycle"], json!(1000));
        assert_eq!(v["output"]["dir"], json!("runs/a"));
        assert!(apply_set(&mut v, "data.synthetic.n.x=1").is_err());
        assert!(apply_set(&mut v, "noequals").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = base();
        v["de"] = json!({"trials": 3});
        assert!(matches!(from_value(v), Err(CliError::Validation(_))));
        let mut v = base();
        v["extra"] = json!(1);
        assert!(from_value(v).is_err());
    }

    #[test]
    fn explicit_seeds_survive_master_seed() {
        let mut v = base();
        v["master_seed"] = json!(9);
        v["de"] = json!({"master_seed": 5});
        let cfg = from_value(v).unwrap();
        assert_eq!(cfg.de.master_seed, 5);
        assert_eq!(cfg.train.seed, derive_seed(9, &[0xC0F1, 0]));
        assert_ne!(cfg.train.seed, cfg.quantization.seed);
    }
}
