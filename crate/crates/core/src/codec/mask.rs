use std::path::Path;

use crate::codec::bits::{read_varint, write_varint};
use crate::error::{Error, Result};
use crate::io::ByteReader;
use crate::sparsity::{Bitset, SparsityMask};

const MASK_MAGIC: &[u8; 4] = b"DEVM";
const MASK_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEncoding {
    /// One bit per parameter, LSB first; set means pruned.
    Bitmap,
    /// LEB128 run lengths alternating pruned and kept, starting with a
    /// (possibly empty) pruned run.
    RunLength,
}

impl MaskEncoding {
    pub fn tag(self) -> u8 {
        match self {
            MaskEncoding::Bitmap => 0,
            MaskEncoding::RunLength => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(MaskEncoding::Bitmap),
            1 => Ok(MaskEncoding::RunLength),
            t => Err(Error::InvalidArgument(format!("unknown mask encoding {t}"))),
        }
    }
}

pub fn bitmap(mask: &Bitset) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for i in mask.iter_ones() {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn run_lengths(mask: &Bitset) -> Vec<u8> {
    let mut out = Vec::new();
    let mut state = true;
    let mut run = 0u64;
    for i in 0..mask.len() {
        if mask.get(i) == state {
            run += 1;
        } else {
            write_varint(&mut out, run);
            state = !state;
            run = 1;
        }
    }
    if run > 0 || mask.is_empty() {
        write_varint(&mut out, run);
    }
    out
}

/// The shorter of the two encodings; the bitmap on a tie.
pub fn encode_mask(mask: &Bitset) -> (MaskEncoding, Vec<u8>) {
    let bm = bitmap(mask);
    let rl = run_lengths(mask);
    if rl.len() < bm.len() {
        (MaskEncoding::RunLength, rl)
    } else {
        (MaskEncoding::Bitmap, bm)
    }
}

pub fn decode_mask(encoding: MaskEncoding, bytes: &[u8], len: usize) -> Result<Bitset> {
    let mut mask = Bitset::new(len);
    match encoding {
        MaskEncoding::Bitmap => {
            if bytes.len() != len.div_ceil(8) {
                return Err(Error::InvalidArgument(format!(
                    "bitmap of {} bytes for {len} parameters",
                    bytes.len()
                )));
            }
            for i in 0..len {
                if bytes[i / 8] >> (i % 8) & 1 == 1 {
                    mask.set(i);
                }
            }
            if len % 8 != 0 && bytes[len / 8] >> (len % 8) != 0 {
                return Err(Error::InvalidArgument("bitmap padding bits are set".into()));
            }
        }
        MaskEncoding::RunLength => {
            let mut pos = 0;
            let mut at = 0usize;
            let mut pruned = true;
            let mut first = true;
            while pos < bytes.len() {
                let (run, n) = read_varint(&bytes[pos..])?;
                pos += n;
                if run == 0 && !first {
                    return Err(Error::InvalidArgument("empty run after the first".into()));
                }
                let end = at
                    .checked_add(run as usize)
                    .filter(|&e| e <= len)
                    .ok_or_else(|| Error::InvalidArgument(format!("runs exceed {len} parameters")))?;
                if pruned {
                    for i in at..end {
                        mask.set(i);
                    }
                }
                at = end;
                pruned = !pruned;
                first = false;
            }
            if at != len || first {
                return Err(Error::InvalidArgument(format!("runs cover {at} of {len} parameters")));
            }
        }
    }
    Ok(mask)
}

/// Standalone mask file: `"DEVM"`, version u16, tensor count u32, then per
/// tensor length u32, encoding tag u8, payload length u32 and payload,
/// closed by a CRC32 of everything before it.
pub fn mask_to_bytes(mask: &SparsityMask) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&MASK_VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.tensors().len() as u32).to_le_bytes());
    for b in mask.tensors() {
        let (enc, bytes) = encode_mask(b);
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
        out.push(enc.tag());
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn mask_from_bytes(bytes: &[u8]) -> Result<SparsityMask> {
    if bytes.len() < 14 {
        return Err(Error::Truncated(format!("{} bytes is too short for a mask file", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    let mut r = ByteReader::new(body, "mask file");
    r.expect_magic(MASK_MAGIC)?;
    let version = r.u16_le()?;
    if version != MASK_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let count = r.u32_le()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u32_le()? as usize;
        let enc = MaskEncoding::from_tag(r.u8()?).map_err(|e| r.error(e.to_string()))?;
        let n = r.u32_le()? as usize;
        tensors.push(decode_mask(enc, r.take(n)?, len).map_err(|e| r.error(e.to_string()))?);
    }
    if r.remaining() != 0 {
        return Err(r.error("trailing bytes"));
    }
    Ok(SparsityMask::from_bitsets(tensors))
}

pub fn save_mask(mask: &SparsityMask, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mask_to_bytes(mask))?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SparsityMask> {
    mask_from_bytes(&std::fs::read(path)?)
}
