use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Supervision attached to a [`Batch`].
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One class index per sample.
    Classes(Vec<usize>),
    /// One target vector per sample, shaped like the network output.
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs `[n, ...input_shape]` with optional targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Option<Targets>,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Option<Targets>) -> Result<Self> {
        if let Some(t) = &targets {
            if t.len() != inputs.rows() {
                return Err(Error::Shape(format!(
                    "{} targets for {} samples",
                    t.len(),
                    inputs.rows()
                )));
            }
        }
        Ok(Batch { inputs, targets })
    }

    pub fn unlabeled(inputs: Tensor) -> Self {
        Batch {
            inputs,
            targets: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Result<Batch> {
        let inputs = self.inputs.select_rows(indices)?;
        let targets = match &self.targets {
            None => None,
            Some(Targets::Classes(c)) => Some(Targets::Classes(indices.iter().map(|&i| c[i]).collect())),
            Some(Targets::Values(t)) => Some(Targets::Values(t.select_rows(indices)?)),
        };
        Ok(Batch { inputs, targets })
    }
}

/// A scalar loss over network outputs `[n, k]` together with its gradient.
pub trait OutputLoss {
    fn loss_and_grad(&self, outputs: &Tensor) -> Result<(f64, Tensor)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error, averaged over batch and output elements.
    Mse,
    /// Softmax cross-entropy on raw outputs (logits), averaged over the batch.
    CrossEntropy,
}

/// A [`LossKind`] bound to concrete targets.
pub struct TargetLoss<'a> {
    pub kind: LossKind,
    pub targets: &'a Targets,
}

fn dense_targets(targets: &Targets, rows: usize, cols: usize) -> Result<Vec<f64>> {
    match targets {
        Targets::Values(t) => {
            if t.rows() != rows || t.row_len() != cols {
                return Err(Error::Shape(format!(
                    "targets {:?} do not match outputs [{rows}, {cols}]",
                    t.shape()
                )));
            }
            Ok(t.data().to_vec())
        }
        Targets::Classes(c) => {
            if c.len() != rows {
                return Err(Error::Shape(format!("{} labels for {rows} outputs", c.len())));
            }
            let mut out = vec![0.0; rows * cols];
            for (i, &label) in c.iter().enumerate() {
                if label >= cols {
                    return Err(Error::InvalidArgument(format!(
                        "label {label} outside {cols} classes"
                    )));
                }
                out[i * cols + label] = 1.0;
            }
            Ok(out)
        }
    }
}

impl OutputLoss for TargetLoss<'_> {
    fn loss_and_grad(&self, outputs: &Tensor) -> Result<(f64, Tensor)> {
        let (n, k) = (outputs.rows(), outputs.row_len());
        let t = dense_targets(self.targets, n, k)?;
        let y = outputs.data();
        match self.kind {
            LossKind::Mse => {
                let scale = 1.0 / (n * k) as f64;
                let mut loss = 0.0;
                let grad = y
                    .iter()
                    .zip(&t)
                    .map(|(&yv, &tv)| {
                        let d = yv - tv;
                        loss += d * d;
                        2.0 * d * scale
                    })
                    .collect();
                Ok((loss * scale, Tensor::new(outputs.shape().to_vec(), grad)?))
            }
            LossKind::CrossEntropy => {
                let mut loss = 0.0;
                let mut grad = Vec::with_capacity(y.len());
                for (row, trow) in y.chunks_exact(k).zip(t.chunks_exact(k)) {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
                    for (&v, &tv) in row.iter().zip(trow) {
                        loss -= tv * (v - lse);
                        grad.push(((v - lse).exp() - tv) / n as f64);
                    }
                }
                Ok((loss / n as f64, Tensor::new(outputs.shape().to_vec(), grad)?))
            }
        }
    }
}
