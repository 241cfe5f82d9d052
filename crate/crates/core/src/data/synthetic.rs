//! Seeded synthetic classification sets for offline tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ProbeSet, Provenance};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Isotropic Gaussian clusters; linearly separable for large `separation`.
    Blobs,
    /// Concentric noisy rings in the first two coordinates; needs a
    /// nonlinear decision boundary.
    Rings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub seed: u64,
}

fn default_dim() -> usize {
    2
}

fn default_separation() -> f64 {
    4.0
}

fn default_noise() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn blobs(n: usize, classes: usize, dim: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Blobs,
            n,
            classes,
            dim,
            separation: default_separation(),
            noise: default_noise(),
            seed,
        }
    }

    pub fn rings(n: usize, classes: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Rings,
            n,
            classes,
            dim: 2,
            separation: 1.0,
            noise: 0.1,
            seed,
        }
    }
}

/// Generates the dataset described by `spec`. Sample `i` has class
/// `i % classes`, so class counts differ by at most one.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<ProbeSet> {
    if spec.classes == 0 || spec.n < spec.classes {
        return Err(Error::InvalidArgument(format!(
            "need n >= classes >= 1 (n = {}, classes = {})",
            spec.n, spec.classes
        )));
    }
    if spec.dim == 0 || (spec.kind == SyntheticKind::Rings && spec.dim < 2) {
        return Err(Error::InvalidArgument(format!("dimension {} too small", spec.dim)));
    }
    if !(spec.noise >= 0.0) || !(spec.separation > 0.0) {
        return Err(Error::InvalidArgument("noise must be >= 0 and separation > 0".into()));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut centers_rng = rng::stream(spec.seed, &[0xB10B, 0]);
    let mut rng = rng::stream(spec.seed, &[0xB10B, 1]);
    let d = spec.dim;
    let mut data = Vec::with_capacity(spec.n * d);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();

    match spec.kind {
        SyntheticKind::Blobs => {
            let centers: Vec<Vec<f64>> = if d == 2 {
                let phase: f64 = centers_rng.random_range(0.0..std::f64::consts::TAU);
                (0..spec.classes)
                    .map(|c| {
                        let a = phase + std::f64::consts::TAU * c as f64 / spec.classes as f64;
                        vec![spec.separation * a.cos(), spec.separation * a.sin()]
                    })
                    .collect()
            } else {
                (0..spec.classes)
                    .map(|_| {
                        let v: Vec<f64> = (0..d).map(|_| normal.sample(&mut centers_rng)).collect();
                        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                        v.into_iter().map(|x| x * spec.separation / norm).collect()
                    })
                    .collect()
            };
            for &c in &labels {
                data.extend(centers[c].iter().map(|&m| m + spec.noise * normal.sample(&mut rng)));
            }
        }
        SyntheticKind::Rings => {
            for &c in &labels {
                let radius = spec.separation * (c + 1) as f64 + spec.noise * normal.sample(&mut rng);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                data.push(radius * angle.cos());
                data.push(radius * angle.sin());
                data.extend((2..d).map(|_| spec.noise * normal.sample(&mut rng)));
            }
        }
    }

    Ok(ProbeSet {
        inputs: Tensor::new(vec![spec.n, d], data)?,
        labels: Some(labels),
        provenance: Provenance::Synthetic(spec.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec::blobs(50, 3, 5, 9);
        let a = synthetic_dataset(&spec).unwrap();
        let b = synthetic_dataset(&spec).unwrap();
        let bits = |p: &ProbeSet| p.inputs.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels, b.labels);
        let c = synthetic_dataset(&SyntheticSpec::blobs(50, 3, 5, 10)).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn classes_balanced_within_one() {
        for spec in [SyntheticSpec::blobs(101, 7, 3, 1), SyntheticSpec::rings(53, 4, 2)] {
            let set = synthetic_dataset(&spec).unwrap();
            let mut counts = vec![0usize; spec.classes];
            for &l in set.labels.as_ref().unwrap() {
                counts[l] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn rejects_fewer_samples_than_classes() {
        assert!(synthetic_dataset(&SyntheticSpec::blobs(2, 3, 2, 0)).is_err());
    }
}
