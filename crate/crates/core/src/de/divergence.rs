use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OutputLoss;
use crate::tensor::Tensor;

/// One output head: a column slice `[start, end)` of the network output,
/// a divisor that rescales it before squaring, and a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Head {
    pub start: usize,
    pub end: usize,
    #[serde(default = "unit")]
    pub divisor: f64,
    #[serde(default = "unit")]
    pub weight: f64,
}

fn unit() -> f64 {
    1.0
}

/// Teacher–student divergence: a weighted sum of per-head mean squared
/// errors, each head normalised by its divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSpec {
    pub heads: Vec<Head>,
}

impl DivergenceSpec {
    /// Plain MSE over all `outputs` columns.
    pub fn mse(outputs: usize) -> Self {
        DivergenceSpec {
            heads: vec![Head {
                start: 0,
                end: outputs,
                divisor: 1.0,
                weight: 1.0,
            }],
        }
    }

    pub fn validate(&self, outputs: usize) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::InvalidArgument("divergence needs at least one head".into()));
        }
        for (i, h) in self.heads.iter().enumerate() {
            if h.start >= h.end || h.end > outputs {
                return Err(Error::InvalidArgument(format!(
                    "head {i} slice [{}, {}) invalid for {outputs} outputs",
                    h.start, h.end
                )));
            }
            if !(h.divisor > 0.0) {
                return Err(Error::InvalidArgument(format!("head {i} divisor must be positive")));
            }
            if !(h.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!("head {i} weight must be >= 0")));
            }
        }
        if !self.heads.iter().any(|h| h.weight > 0.0) {
            return Err(Error::InvalidArgument("at least one head weight must be positive".into()));
        }
        Ok(())
    }

    fn check(&self, student: &Tensor, teacher: &Tensor) -> Result<()> {
        if student.shape() != teacher.shape() || student.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "student outputs {:?} vs teacher outputs {:?}",
                student.shape(),
                teacher.shape()
            )));
        }
        self.validate(student.row_len())
    }

    pub fn divergence(&self, student: &Tensor, teacher: &Tensor) -> Result<f64> {
        Ok(self.evaluate(student, teacher, false)?.0)
    }

    fn evaluate(&self, student: &Tensor, teacher: &Tensor, want_grad: bool) -> Result<(f64, Vec<f64>)> {
        self.check(student, teacher)?;
        let (n, k) = (student.rows(), student.row_len());
        let (s, t) = (student.data(), teacher.data());
        let mut grad = if want_grad { vec![0.0; n * k] } else { Vec::new() };
        let mut total = 0.0;
        for h in &self.heads {
            if h.weight == 0.0 {
                continue;
            }
            let width = h.end - h.start;
            let inv = 1.0 / h.divisor;
            let norm = h.weight / (n * width) as f64;
            let mut acc = 0.0;
            for row in 0..n {
                for col in h.start..h.end {
                    let i = row * k + col;
                    let d = (s[i] - t[i]) * inv;
                    acc += d * d;
                    if want_grad {
                        grad[i] += 2.0 * d * inv * norm;
                    }
                }
            }
            total += acc * norm;
        }
        Ok((total, grad))
    }
}

/// [`DivergenceSpec`] bound to the teacher outputs of one batch.
pub struct DivergenceLoss<'a> {
    pub spec: &'a DivergenceSpec,
    pub teacher: &'a Tensor,
}

impl OutputLoss for DivergenceLoss<'_> {
    fn loss_and_grad(&self, outputs: &Tensor) -> Result<(f64, Tensor)> {
        let (v, g) = self.spec.evaluate(outputs, self.teacher, true)?;
        Ok((v, Tensor::new(outputs.shape().to_vec(), g)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn single_head_mse() {
        let spec = DivergenceSpec::mse(2);
        let d = spec.divergence(&t(&[vec![0.0, 1.0]]), &t(&[vec![1.0, 0.0]])).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn zero_weight_head_is_ignored() {
        let spec = DivergenceSpec {
            heads: vec![
                Head { start: 0, end: 2, divisor: 1.0, weight: 1.0 },
                Head { start: 2, end: 4, divisor: 1.0, weight: 0.0 },
            ],
        };
        let s = t(&[vec![0.0, 1.0, 5.0, -5.0]]);
        let te = t(&[vec![1.0, 0.0, 0.0, 0.0]]);
        let head1 = DivergenceSpec::mse(2)
            .divergence(&t(&[vec![0.0, 1.0]]), &t(&[vec![1.0, 0.0]]))
            .unwrap();
        assert_eq!(spec.divergence(&s, &te).unwrap(), head1);
    }

    #[test]
    fn divisor_normalises_positional_heads() {
        let spec = DivergenceSpec {
            heads: vec![Head { start: 0, end: 1, divisor: 100.0, weight: 1.0 }],
        };
        let d = spec.divergence(&t(&[vec![50.0]]), &t(&[vec![0.0]])).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            DivergenceSpec { heads: vec![] },
            DivergenceSpec { heads: vec![Head { start: 0, end: 3, divisor: 1.0, weight: 1.0 }] },
            DivergenceSpec { heads: vec![Head { start: 0, end: 1, divisor: 0.0, weight: 1.0 }] },
            DivergenceSpec { heads: vec![Head { start: 0, end: 1, divisor: 1.0, weight: 0.0 }] },
        ];
        for spec in bad {
            assert!(spec.validate(2).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let spec = DivergenceSpec {
            heads: vec![
                Head { start: 0, end: 2, divisor: 2.0, weight: 0.7 },
                Head { start: 1, end: 3, divisor: 1.0, weight: 1.3 },
            ],
        };
        let teacher = t(&[vec![0.3, -0.2, 0.9], vec![1.0, 0.1, -0.4]]);
        let mut s = t(&[vec![0.1, 0.2, 0.3], vec![-0.5, 0.4, 0.0]]);
        let (_, g) = DivergenceLoss { spec: &spec, teacher: &teacher }
            .loss_and_grad(&s)
            .unwrap();
        for i in 0..6 {
            let orig = s.data()[i];
            s.data_mut()[i] = orig + 1e-6;
            let up = spec.divergence(&s, &teacher).unwrap();
            s.data_mut()[i] = orig - 1e-6;
            let down = spec.divergence(&s, &teacher).unwrap();
            s.data_mut()[i] = orig;
            assert!(((up - down) / 2e-6 - g.data()[i]).abs() < 1e-8);
        }
    }
}
