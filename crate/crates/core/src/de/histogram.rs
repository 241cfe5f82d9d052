use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::sparsity::SparsityMask;

/// Equal-width histogram over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
        }
        if values.is_empty() {
            return Err(Error::Empty("no surviving weights".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("histogram input".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut h = Histogram {
            lo,
            hi,
            counts: vec![0; bins],
        };
        for &v in values {
            let b = h.bin_of(v);
            h.counts[b] += 1;
        }
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    /// Bin holding `v`, clamped to the range.
    pub fn bin_of(&self, v: f64) -> usize {
        if self.hi <= self.lo {
            return 0;
        }
        let b = ((v - self.lo) / self.width()).floor();
        (b.max(0.0) as usize).min(self.bins() - 1)
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.width()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Most populated bin, lowest on ties.
    pub fn mode_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// Counts never rise again after falling.
    pub fn is_unimodal(&self) -> bool {
        let mut falling = false;
        for w in self.counts.windows(2) {
            if w[1] < w[0] {
                falling = true;
            } else if w[1] > w[0] && falling {
                return false;
            }
        }
        true
    }
}

/// Surviving (unmasked) values of the given tensors, or of every weight
/// tensor when `tensors` is empty.
pub fn surviving_values(net: &Network, mask: &SparsityMask, tensors: &[usize]) -> Result<Vec<f64>> {
    mask.check_network(net)?;
    let chosen = if tensors.is_empty() {
        net.weight_tensors()
    } else {
        tensors.to_vec()
    };
    let mut out = Vec::new();
    for t in chosen {
        let p = net
            .param(t)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter tensor {t}")))?;
        let bits = mask.tensor(t);
        out.extend(p.data().iter().enumerate().filter(|(i, _)| !bits.get(*i)).map(|(_, &v)| v));
    }
    Ok(out)
}

/// Histogram of surviving parameter values.
pub fn weight_histogram(
    net: &Network,
    mask: &SparsityMask,
    tensors: &[usize],
    bins: usize,
) -> Result<Histogram> {
    Histogram::from_values(&surviving_values(net, mask, tensors)?, bins)
}
