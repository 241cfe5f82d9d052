//! IDX files (the MNIST container): big-endian header, unsigned-byte payload.
//!
//! ```text
//! 0x00 0x00 <type=0x08> <rank> | dim u32 BE × rank | payload bytes
//! ```
//! Gzip-wrapped files are detected by their magic and inflated first.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::ByteReader;
use crate::tensor::Tensor;

const UBYTE: u8 = 0x08;

/// A decoded IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// Rank ≥ 2 files, scaled to `[0, 1]` by `/255`; shape `[n, ...dims]`.
    Images(Tensor),
    /// Rank-1 files, taken as class indices.
    Labels(Vec<usize>),
}

impl IdxData {
    pub fn into_images(self) -> Result<Tensor> {
        match self {
            IdxData::Images(t) => Ok(t),
            IdxData::Labels(_) => Err(Error::InvalidArgument("IDX file holds labels, not images".into())),
        }
    }

    pub fn into_labels(self) -> Result<Vec<usize>> {
        match self {
            IdxData::Labels(l) => Ok(l),
            IdxData::Images(_) => Err(Error::InvalidArgument("IDX file holds images, not labels".into())),
        }
    }

    /// The payload as a tensor: images as-is, labels as a rank-1 tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        match self {
            IdxData::Images(t) => Ok(t.clone()),
            IdxData::Labels(l) => Tensor::new(vec![l.len()], l.iter().map(|&v| v as f64).collect()),
        }
    }
}

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(bytes).read_to_end(&mut out)?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

/// Parses an IDX byte buffer (optionally gzip-compressed).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let bytes = maybe_gunzip(bytes)?;
    let mut r = ByteReader::new(&bytes, "IDX file");
    let magic = r.take(4)?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(Error::format("IDX file", 0, format!("bad magic {magic:02x?}")));
    }
    if magic[2] != UBYTE {
        return Err(Error::format(
            "IDX file",
            2,
            format!("unsupported element type {:#04x}", magic[2]),
        ));
    }
    let rank = magic[3] as usize;
    if rank == 0 {
        return Err(Error::format("IDX file", 3, "rank 0"));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = r.u32_be()? as usize;
        if d == 0 {
            return Err(r.error("zero dimension"));
        }
        dims.push(d);
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| r.error("dimension product overflows"))?;
    if r.remaining() < n {
        return Err(r.error(format!(
            "payload truncated: need {n} bytes, {} present",
            r.remaining()
        )));
    }
    let payload = r.take(n)?;
    if r.remaining() != 0 {
        return Err(r.error(format!("{} trailing bytes", r.remaining())));
    }
    if rank == 1 {
        Ok(IdxData::Labels(payload.iter().map(|&b| b as usize).collect()))
    } else {
        let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
        Ok(IdxData::Images(Tensor::new(dims, data)?))
    }
}

/// Encodes images (values in `[0, 1]`, rounded to the nearest 1/255) or
/// labels (< 256) as an uncompressed IDX buffer.
pub fn serialize_idx(data: &IdxData) -> Result<Vec<u8>> {
    let (dims, payload): (Vec<usize>, Vec<u8>) = match data {
        IdxData::Images(t) => {
            let bytes = t
                .data()
                .iter()
                .map(|&v| {
                    if (0.0..=1.0).contains(&v) {
                        Ok((v * 255.0).round() as u8)
                    } else {
                        Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")))
                    }
                })
                .collect::<Result<_>>()?;
            (t.shape().to_vec(), bytes)
        }
        IdxData::Labels(l) => {
            let bytes = l
                .iter()
                .map(|&v| {
                    u8::try_from(v).map_err(|_| Error::InvalidArgument(format!("label {v} > 255")))
                })
                .collect::<Result<_>>()?;
            (vec![l.len()], bytes)
        }
    };
    let mut out = vec![0, 0, UBYTE, dims.len() as u8];
    for d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    parse_idx(&std::fs::read(path)?)
}
