use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::de::DivergenceSpec;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::quantizer::levels::Scheme;
use crate::quantizer::quantize::{dequantize, quantize, QuantizationSpec, Rounding};
use crate::sparsity::{Bitset, SparsityMask};
use crate::tensor::Tensor;

/// Scheme, width and rounding for one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorQuant {
    pub scheme: Scheme,
    pub bits: u32,
    pub rounding: Rounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    pub scheme: Scheme,
    pub bits: u32,
    pub rounding: Rounding,
    #[serde(default)]
    pub seed: u64,
    /// Per-tensor settings keyed by flat tensor index.
    #[serde(default)]
    pub overrides: BTreeMap<usize, TensorQuant>,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            scheme: Scheme::UniformAffine,
            bits: 8,
            rounding: Rounding::Stochastic,
            seed: 0,
            overrides: BTreeMap::new(),
        }
    }
}

impl QuantConfig {
    pub fn for_tensor(&self, t: usize) -> TensorQuant {
        self.overrides.get(&t).copied().unwrap_or(TensorQuant {
            scheme: self.scheme,
            bits: self.bits,
            rounding: self.rounding,
        })
    }
}

/// Codes of one parameter tensor's surviving entries, in flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    /// Set bits are pruned positions.
    pub mask: Bitset,
    pub spec: QuantizationSpec,
    pub codes: Vec<u64>,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Dense values: zeros at pruned positions, table values elsewhere.
    pub fn values(&self) -> Result<Vec<f64>> {
        let survivors = self.len() - self.mask.count_ones();
        if survivors != self.codes.len() {
            return Err(Error::Shape(format!(
                "{} codes for {survivors} surviving positions",
                self.codes.len()
            )));
        }
        let deq = if self.codes.is_empty() {
            Vec::new()
        } else {
            dequantize(&self.codes, &self.spec)?
        };
        let mut it = deq.into_iter();
        Ok((0..self.len())
            .map(|i| if self.mask.get(i) { 0.0 } else { it.next().unwrap() })
            .collect())
    }
}

/// One [`QuantizedTensor`] per parameter tensor, weights and biases alike.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub tensors: Vec<QuantizedTensor>,
}

impl QuantizedModel {
    pub fn mask(&self) -> SparsityMask {
        SparsityMask::from_bitsets(self.tensors.iter().map(|t| t.mask.clone()).collect())
    }

    /// Copy of `template` with every parameter replaced by its dequantized
    /// value.
    pub fn to_network(&self, template: &Network) -> Result<Network> {
        let mut net = template.clone();
        let params = net.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "quantized model has {} tensors, network {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, q) in params.into_iter().zip(&self.tensors) {
            if p.shape() != q.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "tensor shape {:?} vs quantized {:?}",
                    p.shape(),
                    q.shape
                )));
            }
            p.data_mut().copy_from_slice(&q.values()?);
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = QuantFile {
            format: QUANT_FORMAT.into(),
            tensors: self
                .tensors
                .iter()
                .map(|t| QuantTensorFile {
                    shape: t.shape.clone(),
                    pruned: t.mask.iter_ones().collect(),
                    spec: t.spec.clone(),
                    codes: t.codes.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: QuantFile = serde_json::from_str(text)?;
        if file.format != QUANT_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown format tag {:?}", file.format)));
        }
        let mut tensors = Vec::with_capacity(file.tensors.len());
        for (i, t) in file.tensors.into_iter().enumerate() {
            let len: usize = t.shape.iter().product();
            let mut mask = Bitset::new(len);
            for p in t.pruned {
                if p >= len {
                    return Err(Error::InvalidArgument(format!(
                        "tensor {i}: pruned index {p} outside {len}"
                    )));
                }
                mask.set(p);
            }
            let q = QuantizedTensor {
                shape: t.shape,
                mask,
                spec: t.spec,
                codes: t.codes,
            };
            q.values()?;
            tensors.push(q);
        }
        Ok(QuantizedModel { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        QuantizedModel::from_json(&std::fs::read_to_string(path)?)
    }
}

const QUANT_FORMAT: &str = "DEVQ/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantFile {
    format: String,
    tensors: Vec<QuantTensorFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantTensorFile {
    shape: Vec<usize>,
    pruned: Vec<usize>,
    spec: QuantizationSpec,
    codes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorReport {
    pub tensor: usize,
    pub scheme: Scheme,
    pub bits: u32,
    pub levels: usize,
    /// Histogram bins behind optimal levels, if any.
    pub density_bins: Option<usize>,
    pub survivors: usize,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantReport {
    pub tensors: Vec<TensorReport>,
    /// Student outputs against quantized outputs on the evaluation inputs.
    pub divergence: Option<f64>,
    pub accuracy_before: Option<f64>,
    pub accuracy_after: Option<f64>,
}

impl QuantReport {
    pub fn accuracy_delta(&self) -> Option<f64> {
        Some(self.accuracy_before? - self.accuracy_after?)
    }
}

/// Inputs and optional labels used to measure the effect of quantization.
pub struct EvalSet<'a> {
    pub inputs: &'a Tensor,
    pub labels: Option<&'a [usize]>,
}

/// Quantizes every parameter tensor of `student` with its own level table.
/// Levels are rounded to f32 so the returned network matches what a packed
/// file decodes to.
pub fn quantize_network(
    student: &Network,
    mask: &SparsityMask,
    cfg: &QuantConfig,
    eval: Option<EvalSet<'_>>,
) -> Result<(QuantizedModel, Network, QuantReport)> {
    mask.check_network(student)?;
    let mut tensors = Vec::new();
    let mut reports = Vec::new();
    for (t, p) in student.params().into_iter().enumerate() {
        let tq = cfg.for_tensor(t);
        let bits = mask.tensor(t);
        let survivors: Vec<f64> = p
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| !bits.get(*i))
            .map(|(_, &v)| v)
            .collect();
        let (spec, codes) = if survivors.is_empty() {
            (QuantizationSpec::single(0.0, tq.rounding, cfg.seed, tq.scheme), Vec::new())
        } else {
            let mut spec = QuantizationSpec::build(tq.scheme, tq.bits, tq.rounding, &survivors, cfg.seed)
                .map_err(|e| layer_error(t, e))?;
            if !spec.is_identity() {
                spec.round_levels_to_f32().map_err(|e| layer_error(t, e))?;
            }
            let codes = quantize(p.data(), Some(bits), &spec, t as u64)?;
            (spec, codes)
        };
        let q = QuantizedTensor {
            shape: p.shape().to_vec(),
            mask: bits.clone(),
            spec,
            codes,
        };
        let values = q.values()?;
        let errs: Vec<f64> = p
            .data()
            .iter()
            .zip(&values)
            .enumerate()
            .filter(|(i, _)| !bits.get(*i))
            .map(|(_, (a, b))| (a - b).abs())
            .collect();
        reports.push(TensorReport {
            tensor: t,
            scheme: q.spec.scheme,
            bits: q.spec.bits,
            levels: q.spec.levels.len(),
            density_bins: q.spec.density_bins,
            survivors: errs.len(),
            mean_abs_error: if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 },
            max_abs_error: errs.iter().copied().fold(0.0, f64::max),
        });
        tensors.push(q);
    }
    let model = QuantizedModel { tensors };
    let quantized = model.to_network(student)?;
    let mut report = QuantReport {
        tensors: reports,
        divergence: None,
        accuracy_before: None,
        accuracy_after: None,
    };
    if let Some(e) = eval {
        let before = mask.applied(student)?.forward(e.inputs)?;
        let after = quantized.forward(e.inputs)?;
        report.divergence = Some(DivergenceSpec::mse(before.row_len()).divergence(&after, &before)?);
        if let Some(labels) = e.labels {
            report.accuracy_before = Some(mask.applied(student)?.accuracy(e.inputs, labels)?);
            report.accuracy_after = Some(quantized.accuracy(e.inputs, labels)?);
        }
    }
    Ok((model, quantized, report))
}

fn layer_error(t: usize, e: Error) -> Error {
    match e {
        Error::NoConvergence { .. } | Error::DegenerateRange { .. } => e,
        other => Error::InvalidArgument(format!("parameter tensor {t}: {other}")),
    }
}
