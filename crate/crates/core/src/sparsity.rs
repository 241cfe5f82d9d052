//! Irrevocable per-tensor pruning masks.
//!
//! A mask holds one bitset per parameter tensor, addressed by row-major flat
//! index. A set bit means the parameter is pruned and held at exactly zero.
//! Bits only ever go from clear to set.

use crate::error::{Error, Result};
use crate::nn::Network;

/// Fixed-length bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitset {
    len: usize,
    words: Vec<u64>,
}

impl Bitset {
    pub fn new(len: usize) -> Self {
        Bitset {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut b = Bitset {
            len,
            words: vec![u64::MAX; len.div_ceil(64)],
        };
        b.clear_tail();
        b
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Bitset::new(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            if v {
                b.set(i);
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + t)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn union_with(&mut self, other: &Bitset) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// True when every bit set in `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Bitset) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

/// One trial's proposal: flat indices of a single parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    tensor: usize,
    indices: Vec<usize>,
}

impl CandidateSet {
    /// Sorts and deduplicates `indices`.
    pub fn new(tensor: usize, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        CandidateSet { tensor, indices }
    }

    pub fn empty(tensor: usize) -> Self {
        CandidateSet {
            tensor,
            indices: Vec::new(),
        }
    }

    pub fn tensor(&self) -> usize {
        self.tensor
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Scope for [`SparsityMask::sparsity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Tensor(usize),
    Network,
}

/// Per-tensor pruning masks for one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityMask {
    tensors: Vec<Bitset>,
}

impl SparsityMask {
    pub fn empty(net: &Network) -> Self {
        SparsityMask {
            tensors: net.params().iter().map(|t| Bitset::new(t.len())).collect(),
        }
    }

    pub fn full(net: &Network) -> Self {
        SparsityMask {
            tensors: net.params().iter().map(|t| Bitset::full(t.len())).collect(),
        }
    }

    pub fn from_bitsets(tensors: Vec<Bitset>) -> Self {
        SparsityMask { tensors }
    }

    pub fn tensors(&self) -> &[Bitset] {
        &self.tensors
    }

    pub fn tensor(&self, index: usize) -> &Bitset {
        &self.tensors[index]
    }

    pub fn is_pruned(&self, tensor: usize, index: usize) -> bool {
        self.tensors[tensor].get(index)
    }

    /// Marks one position pruned.
    pub fn prune(&mut self, tensor: usize, index: usize) -> Result<()> {
        let t = self
            .tensors
            .get_mut(tensor)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter tensor {tensor}")))?;
        if index >= t.len() {
            return Err(Error::InvalidArgument(format!(
                "index {index} outside tensor {tensor} of {} parameters",
                t.len()
            )));
        }
        t.set(index);
        Ok(())
    }

    pub fn check_network(&self, net: &Network) -> Result<()> {
        let params = net.params();
        if params.len() != self.tensors.len()
            || params.iter().zip(&self.tensors).any(|(p, b)| p.len() != b.len())
        {
            return Err(Error::Shape("mask does not match network parameters".into()));
        }
        Ok(())
    }

    fn check_candidate(&self, cand: &CandidateSet) -> Result<()> {
        let t = self.tensors.get(cand.tensor).ok_or_else(|| {
            Error::InvalidArgument(format!("candidate refers to missing tensor {}", cand.tensor))
        })?;
        if let Some(&last) = cand.indices.last() {
            if last >= t.len() {
                return Err(Error::InvalidArgument(format!(
                    "candidate index {last} outside tensor {} of {} parameters",
                    cand.tensor,
                    t.len()
                )));
            }
        }
        Ok(())
    }

    /// Union with a candidate set, returning a new mask.
    pub fn merge(&self, cand: &CandidateSet) -> Result<SparsityMask> {
        let mut out = self.clone();
        out.merge_in_place(cand)?;
        Ok(out)
    }

    /// Union with a candidate set; returns how many positions were newly pruned.
    pub fn merge_in_place(&mut self, cand: &CandidateSet) -> Result<usize> {
        self.check_candidate(cand)?;
        let t = &mut self.tensors[cand.tensor];
        let mut fresh = 0;
        for &i in &cand.indices {
            if !t.get(i) {
                t.set(i);
                fresh += 1;
            }
        }
        Ok(fresh)
    }

    /// Number of positions in `cand` that are not yet pruned.
    pub fn new_zeros(&self, cand: &CandidateSet) -> usize {
        let t = &self.tensors[cand.tensor];
        cand.indices.iter().filter(|&&i| !t.get(i)).count()
    }

    pub fn pruned_count(&self, scope: Scope) -> usize {
        match scope {
            Scope::Tensor(i) => self.tensors[i].count_ones(),
            Scope::Network => self.tensors.iter().map(Bitset::count_ones).sum(),
        }
    }

    pub fn total(&self, scope: Scope) -> usize {
        match scope {
            Scope::Tensor(i) => self.tensors[i].len(),
            Scope::Network => self.tensors.iter().map(Bitset::len).sum(),
        }
    }

    /// Pruned fraction over the scope; an empty scope reports 0.
    pub fn sparsity(&self, scope: Scope) -> f64 {
        let total = self.total(scope);
        if total == 0 {
            0.0
        } else {
            self.pruned_count(scope) as f64 / total as f64
        }
    }

    /// True when every position pruned here is pruned in `later` too.
    pub fn is_subset_of(&self, later: &SparsityMask) -> bool {
        self.tensors.len() == later.tensors.len()
            && self.tensors.iter().zip(&later.tensors).all(|(a, b)| a.is_subset_of(b))
    }

    /// Zeroes every pruned position of `net` in place.
    pub fn apply(&self, net: &mut Network) -> Result<()> {
        self.check_network(net)?;
        for (p, bits) in net.params_mut().into_iter().zip(&self.tensors) {
            let data = p.data_mut();
            for i in bits.iter_ones() {
                data[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Returns a copy of `net` with pruned positions zeroed.
    pub fn applied(&self, net: &Network) -> Result<Network> {
        let mut out = net.clone();
        self.apply(&mut out)?;
        Ok(out)
    }
}
