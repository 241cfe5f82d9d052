//! Dataset ingestion, synthetic generators and probe-set subsetting.

mod idx;
mod synthetic;

use rand::seq::index;

pub use idx::{parse_idx, read_idx, serialize_idx, IdxData};
pub use synthetic::{synthetic_dataset, SyntheticKind, SyntheticSpec};

use crate::error::{Error, Result};
use crate::nn::{Batch, Targets};
use crate::rng;
use crate::tensor::Tensor;

/// Where a probe set came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Files { images: String, labels: Option<String> },
    Synthetic(SyntheticSpec),
    Subset { seed: u64, of: usize },
    Inline,
}

/// Samples with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub inputs: Tensor,
    pub labels: Option<Vec<usize>>,
    pub provenance: Provenance,
}

impl ProbeSet {
    pub fn new(inputs: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != inputs.rows() {
                return Err(Error::Shape(format!(
                    "{} labels for {} samples",
                    l.len(),
                    inputs.rows()
                )));
            }
        }
        Ok(ProbeSet {
            inputs,
            labels,
            provenance: Provenance::Inline,
        })
    }

    /// Loads an IDX image file and optional IDX label file.
    pub fn from_idx(images: &str, labels: Option<&str>) -> Result<Self> {
        let inputs = read_idx(images)?.into_images()?;
        let lab = labels.map(|p| read_idx(p)?.into_labels()).transpose()?;
        let mut set = ProbeSet::new(inputs, lab)?;
        set.provenance = Provenance::Files {
            images: images.to_string(),
            labels: labels.map(str::to_string),
        };
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::MissingTargets("dataset has no labels".into()))
    }

    pub fn select(&self, indices: &[usize]) -> Result<ProbeSet> {
        Ok(ProbeSet {
            inputs: self.inputs.select_rows(indices)?,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            provenance: self.provenance.clone(),
        })
    }

    /// Splits off the last `holdout` samples.
    pub fn split(&self, holdout: usize) -> Result<(ProbeSet, ProbeSet)> {
        if holdout == 0 || holdout >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "holdout {holdout} must be in 1..{}",
                self.len()
            )));
        }
        let cut = self.len() - holdout;
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..self.len()).collect();
        Ok((self.select(&head)?, self.select(&tail)?))
    }

    pub fn to_batch(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            targets: self.labels.clone().map(Targets::Classes),
        }
    }
}

/// Uniform sample of `k` distinct samples without replacement, in sampled
/// order; deterministic per seed.
pub fn subset(set: &ProbeSet, k: usize, seed: u64) -> Result<ProbeSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("subset size must be >= 1".into()));
    }
    if k > set.len() {
        return Err(Error::InvalidArgument(format!(
            "subset of {k} from {} samples",
            set.len()
        )));
    }
    let picks = index::sample(&mut rng::stream(seed, &[0x5B5E7]), set.len(), k).into_vec();
    let mut out = set.select(&picks)?;
    out.provenance = Provenance::Subset {
        seed,
        of: set.len(),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> ProbeSet {
        let inputs = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        ProbeSet::new(inputs, Some((0..n).collect())).unwrap()
    }

    #[test]
    fn full_subset_is_a_permutation() {
        let set = numbered(20);
        let s = subset(&set, 20, 3).unwrap();
        let mut l = s.labels.clone().unwrap();
        l.sort();
        assert_eq!(l, (0..20).collect::<Vec<_>>());
        // labels follow their inputs
        for (i, &lab) in s.labels.as_ref().unwrap().iter().enumerate() {
            assert_eq!(s.inputs.data()[i], lab as f64);
        }
    }

    #[test]
    fn subset_bounds() {
        let set = numbered(5);
        assert!(subset(&set, 0, 1).is_err());
        assert!(subset(&set, 6, 1).is_err());
    }

    #[test]
    fn seeds_give_different_subsets() {
        let set = numbered(10_000);
        let a = subset(&set, 100, 1).unwrap();
        let b = subset(&set, 100, 2).unwrap();
        assert_ne!(a.labels, b.labels);
        assert_eq!(a.labels, subset(&set, 100, 1).unwrap().labels);
    }
}
