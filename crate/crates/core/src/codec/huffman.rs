use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::codec::bits::{read_varint, write_varint, BitReader, BitWriter};
use crate::error::{Error, Result};

const MAX_CODE_LEN: u8 = 64;

/// Canonical prefix code over symbols `0..alphabet`. Symbols with length 0
/// have no codeword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    // decoder state, per code length
    sorted: Vec<u64>,
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
}

impl HuffmanTable {
    /// Optimal code for `freqs[symbol]`. A lone symbol gets a 1-bit code.
    /// Ties are broken by symbol order, so the result is deterministic.
    pub fn build(freqs: &[u64]) -> Result<Self> {
        let used: Vec<usize> = (0..freqs.len()).filter(|&s| freqs[s] > 0).collect();
        if used.is_empty() {
            return Err(Error::Empty("no symbol has a nonzero count".into()));
        }
        let mut lengths = vec![0u8; freqs.len()];
        if used.len() == 1 {
            lengths[used[0]] = 1;
            return HuffmanTable::from_lengths(lengths);
        }
        // nodes 0..used.len() are leaves; internal nodes follow
        let mut parent = vec![usize::MAX; 2 * used.len() - 1];
        let mut heap: BinaryHeap<Reverse<(u128, usize)>> = used
            .iter()
            .enumerate()
            .map(|(i, &s)| Reverse((freqs[s] as u128, i)))
            .collect();
        let mut next = used.len();
        while heap.len() > 1 {
            let Reverse((wa, a)) = heap.pop().unwrap();
            let Reverse((wb, b)) = heap.pop().unwrap();
            parent[a] = next;
            parent[b] = next;
            heap.push(Reverse((wa + wb, next)));
            next += 1;
        }
        let root = next - 1;
        let mut depth = vec![0u32; parent.len()];
        for node in (0..root).rev() {
            depth[node] = depth[parent[node]] + 1;
        }
        for (i, &s) in used.iter().enumerate() {
            if depth[i] > MAX_CODE_LEN as u32 {
                return Err(Error::InvalidArgument(format!(
                    "code length {} exceeds {MAX_CODE_LEN}",
                    depth[i]
                )));
            }
            lengths[s] = depth[i] as u8;
        }
        HuffmanTable::from_lengths(lengths)
    }

    /// Canonical codewords for the given lengths: shorter codes first, ties
    /// in symbol order, consecutive values within a length.
    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self> {
        let max = lengths.iter().copied().max().unwrap_or(0);
        if max > MAX_CODE_LEN {
            return Err(Error::InvalidArgument(format!("code length {max} exceeds {MAX_CODE_LEN}")));
        }
        let kraft: u128 = lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| 1u128 << (MAX_CODE_LEN - l))
            .sum();
        if kraft > 1u128 << MAX_CODE_LEN {
            return Err(Error::InvalidArgument("code lengths violate the Kraft inequality".into()));
        }
        let mut sorted: Vec<u64> = (0..lengths.len() as u64).filter(|&s| lengths[s as usize] > 0).collect();
        sorted.sort_by_key(|&s| (lengths[s as usize], s));
        let levels = max as usize + 1;
        let mut count = vec![0usize; levels];
        for &s in &sorted {
            count[lengths[s as usize] as usize] += 1;
        }
        let mut codes = vec![0u64; lengths.len()];
        let mut first_code = vec![0u64; levels];
        let mut first_index = vec![0usize; levels];
        let mut code: u64 = 0;
        let mut index = 0;
        for len in 1..levels {
            first_code[len] = code;
            first_index[len] = index;
            for &s in &sorted[index..index + count[len]] {
                codes[s as usize] = code;
                code += 1;
            }
            index += count[len];
            if len < levels - 1 {
                code <<= 1;
            }
        }
        Ok(HuffmanTable {
            lengths,
            codes,
            sorted,
            first_code,
            first_index,
            count,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `(codeword, length)`, or `None` for a symbol without a code.
    pub fn code(&self, symbol: u64) -> Option<(u64, u8)> {
        let len = *self.lengths.get(symbol as usize)?;
        (len > 0).then(|| (self.codes[symbol as usize], len))
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().filter(|&&l| l > 0).map(|&l| 0.5f64.powi(l as i32)).sum()
    }

    /// Mean codeword length under `freqs`.
    pub fn average_length(&self, freqs: &[u64]) -> f64 {
        let total: u64 = freqs.iter().sum();
        let bits: f64 = freqs
            .iter()
            .zip(&self.lengths)
            .map(|(&f, &l)| f as f64 * l as f64)
            .sum();
        bits / total as f64
    }

    pub fn encode(&self, symbols: &[u64], w: &mut BitWriter) -> Result<()> {
        for &s in symbols {
            let (code, len) = self.code(s).ok_or(Error::CodeOutOfRange {
                code: s,
                size: self.alphabet() as u64,
            })?;
            w.write(code, len as u32);
        }
        Ok(())
    }

    pub fn decode(&self, r: &mut BitReader<'_>, count: usize) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut code = 0u64;
            let mut len = 0;
            loop {
                len += 1;
                if len >= self.count.len() {
                    return Err(Error::InvalidArgument("bit pattern matches no codeword".into()));
                }
                code = (code << 1) | r.bit()?;
                let offset = code.wrapping_sub(self.first_code[len]);
                if code >= self.first_code[len] && (offset as usize) < self.count[len] {
                    out.push(self.sorted[self.first_index[len] + offset as usize]);
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Alphabet size, longest length, symbol count per length, then the
    /// symbols in canonical order; all LEB128 except the length byte.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        write_varint(out, self.alphabet() as u64);
        let max = self.count.len() - 1;
        out.push(max as u8);
        for len in 1..=max {
            write_varint(out, self.count[len] as u64);
        }
        for &s in &self.sorted {
            write_varint(out, s);
        }
    }

    /// Inverse of [`HuffmanTable::write_to`]; returns the table and the
    /// bytes consumed.
    pub fn read_from(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut pos = 0;
        let next = |bytes: &[u8], pos: &mut usize| -> Result<u64> {
            let (v, n) = read_varint(&bytes[*pos..])?;
            *pos += n;
            Ok(v)
        };
        let alphabet = next(bytes, &mut pos)?;
        if alphabet > 1 << 16 {
            return Err(Error::InvalidArgument(format!("alphabet of {alphabet} symbols")));
        }
        let max = *bytes.get(pos).ok_or(Error::Truncated("huffman table".into()))?;
        pos += 1;
        if max > MAX_CODE_LEN {
            return Err(Error::InvalidArgument(format!("code length {max} exceeds {MAX_CODE_LEN}")));
        }
        let mut counts = Vec::with_capacity(max as usize);
        for _ in 0..max {
            counts.push(next(bytes, &mut pos)?);
        }
        if counts.iter().sum::<u64>() > alphabet {
            return Err(Error::InvalidArgument("more codewords than symbols".into()));
        }
        let mut lengths = vec![0u8; alphabet as usize];
        for (len, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                let s = next(bytes, &mut pos)?;
                if s >= alphabet || lengths[s as usize] != 0 {
                    return Err(Error::InvalidArgument(format!("bad or repeated symbol {s}")));
                }
                lengths[s as usize] = len as u8 + 1;
            }
        }
        Ok((HuffmanTable::from_lengths(lengths)?, pos))
    }
}

/// Shannon entropy of `freqs` in bits per symbol.
pub fn entropy(freqs: &[u64]) -> f64 {
    let total: u64 = freqs.iter().sum();
    freqs
        .iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}
