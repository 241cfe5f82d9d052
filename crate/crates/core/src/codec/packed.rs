use std::path::Path;

use serde::Serialize;

use crate::codec::bits::{BitReader, BitWriter};
use crate::codec::huffman::HuffmanTable;
use crate::codec::mask::{decode_mask, encode_mask, MaskEncoding};
use crate::error::{Error, Result};
use crate::io::ByteReader;
use crate::nn::Network;
use crate::par::Executor;
use crate::quantizer::{QuantizationSpec, QuantizedModel, QuantizedTensor, Rounding, Scheme};

const MAGIC: &[u8; 4] = b"DEVP";
const VERSION: u16 = 1;
const IDENTITY_BITS: u8 = 64;

/// Byte and bit accounting for one encoded layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStats {
    pub params: usize,
    pub survivors: usize,
    #[serde(serialize_with = "encoding_name")]
    pub mask_encoding: MaskEncoding,
    pub mask_bytes: usize,
    pub lut_bytes: usize,
    pub table_bytes: usize,
    pub payload_bits: u64,
    /// Whole layer record, byte aligned.
    pub bytes: usize,
}

fn encoding_name<S: serde::Serializer>(e: &MaskEncoding, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match e {
        MaskEncoding::Bitmap => "bitmap",
        MaskEncoding::RunLength => "run_length",
    })
}

fn scheme_tag(s: Scheme) -> u8 {
    match s {
        Scheme::UniformScale => 0,
        Scheme::UniformAffine => 1,
        Scheme::OptimalDensity => 2,
        Scheme::Identity => 3,
    }
}

fn scheme_from_tag(t: u8) -> Result<Scheme> {
    Ok(match t {
        0 => Scheme::UniformScale,
        1 => Scheme::UniformAffine,
        2 => Scheme::OptimalDensity,
        3 => Scheme::Identity,
        _ => return Err(Error::InvalidArgument(format!("unknown scheme tag {t}"))),
    })
}

/// Serialises one quantized tensor:
///
/// ```text
/// rank u8, dims u32 each
/// scheme u8, rounding u8, seed u64, density bins u32 (0 = none)
/// mask tag u8, mask length u32, mask bytes
/// LUT:      bits u8, 2^bits f32 levels          (identity: 64, raw width u8)
/// table:    canonical Huffman lengths           (identity: absent)
/// payload:  bit length u64, bytes
/// ```
///
/// Codes are Huffman coded in flat order. Identity tensors store raw
/// values, as f32 when every survivor is exactly representable.
pub fn encode_layer(t: &QuantizedTensor) -> Result<(Vec<u8>, LayerStats)> {
    let survivors = t.len() - t.mask.count_ones();
    if t.codes.len() != survivors {
        return Err(Error::Shape(format!(
            "{} codes for {survivors} surviving positions",
            t.codes.len()
        )));
    }
    if t.shape.iter().product::<usize>() != t.len() || t.shape.len() > u8::MAX as usize {
        return Err(Error::Shape(format!("shape {:?} for {} parameters", t.shape, t.len())));
    }
    t.spec.validate()?;
    let mut out = Vec::new();
    out.push(t.shape.len() as u8);
    for &d in &t.shape {
        out.extend_from_slice(&u32::try_from(d).map_err(|_| Error::Shape(format!("dimension {d}")))?.to_le_bytes());
    }
    out.push(scheme_tag(t.spec.scheme));
    out.push(match t.spec.rounding {
        Rounding::Nearest => 0,
        Rounding::Stochastic => 1,
    });
    out.extend_from_slice(&t.spec.seed.to_le_bytes());
    let bins = t.spec.density_bins.unwrap_or(0);
    out.extend_from_slice(&u32::try_from(bins).map_err(|_| Error::InvalidArgument("density bins".into()))?.to_le_bytes());

    let (encoding, mask_bytes) = encode_mask(&t.mask);
    out.push(encoding.tag());
    out.extend_from_slice(&(mask_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&mask_bytes);

    let lut_start = out.len();
    let mut w = BitWriter::new();
    let table_bytes;
    if t.spec.is_identity() {
        let narrow = t
            .codes
            .iter()
            .all(|&c| ((f64::from_bits(c) as f32) as f64).to_bits() == c);
        out.push(IDENTITY_BITS);
        out.push(if narrow { 32 } else { 64 });
        for &c in &t.codes {
            if narrow {
                w.write((f64::from_bits(c) as f32).to_bits() as u64, 32);
            } else {
                w.write(c, 64);
            }
        }
        table_bytes = 0;
    } else {
        out.push(t.spec.bits as u8);
        for &l in &t.spec.levels {
            let f = l as f32;
            if f as f64 != l {
                return Err(Error::InvalidArgument(format!("level {l} is not an f32 value")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
        let mut freqs = vec![0u64; t.spec.levels.len()];
        for &c in &t.codes {
            let slot = freqs.get_mut(c as usize).ok_or(Error::CodeOutOfRange {
                code: c,
                size: t.spec.levels.len() as u64,
            })?;
            *slot += 1;
        }
        let table = if survivors == 0 {
            HuffmanTable::from_lengths(vec![0; freqs.len()])?
        } else {
            HuffmanTable::build(&freqs)?
        };
        let before = out.len();
        table.write_to(&mut out);
        table_bytes = out.len() - before;
        table.encode(&t.codes, &mut w)?;
    }
    let lut_bytes = out.len() - lut_start - table_bytes;
    let (payload, payload_bits) = w.finish();
    out.extend_from_slice(&payload_bits.to_le_bytes());
    out.extend_from_slice(&payload);
    let stats = LayerStats {
        params: t.len(),
        survivors,
        mask_encoding: encoding,
        mask_bytes: mask_bytes.len(),
        lut_bytes,
        table_bytes,
        payload_bits,
        bytes: out.len(),
    };
    Ok((out, stats))
}

/// Inverse of [`encode_layer`]. Returns the tensor and the bytes consumed.
pub fn decode_layer(bytes: &[u8]) -> Result<(QuantizedTensor, LayerStats)> {
    let mut r = ByteReader::new(bytes, "packed layer");
    let rank = r.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32_le()? as usize);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| r.error("shape overflows"))?;
    let scheme = scheme_from_tag(r.u8()?).map_err(|e| r.error(e.to_string()))?;
    let rounding = match r.u8()? {
        0 => Rounding::Nearest,
        1 => Rounding::Stochastic,
        t => return Err(r.error(format!("unknown rounding tag {t}"))),
    };
    let seed = r.u64_le()?;
    let bins = r.u32_le()? as usize;
    let encoding = MaskEncoding::from_tag(r.u8()?).map_err(|e| r.error(e.to_string()))?;
    let mask_len = r.u32_le()? as usize;
    let mask = decode_mask(encoding, r.take(mask_len)?, len).map_err(|e| r.error(e.to_string()))?;
    let survivors = len - mask.count_ones();

    let lut_start = r.pos();
    let bits = r.u8()?;
    let (spec, table, width, table_bytes) = if scheme == Scheme::Identity {
        if bits != IDENTITY_BITS {
            return Err(r.error(format!("identity layer with {bits} bits")));
        }
        let width = r.u8()?;
        if width != 32 && width != 64 {
            return Err(r.error(format!("raw width {width}")));
        }
        let spec = QuantizationSpec {
            scheme,
            bits: 64,
            rounding,
            levels: Vec::new(),
            seed,
            density_bins: None,
        };
        (spec, None, width as u32, 0)
    } else {
        if bits > 16 {
            return Err(r.error(format!("{bits}-bit table")));
        }
        let mut levels = Vec::with_capacity(1 << bits);
        for _ in 0..1usize << bits {
            levels.push(r.f32_le()? as f64);
        }
        let at = r.pos();
        let rest = r.take(r.remaining())?;
        let (table, used) = HuffmanTable::read_from(rest).map_err(|e| Error::format("packed layer", at, e.to_string()))?;
        r = ByteReader::new(bytes, "packed layer");
        r.take(at + used)?;
        if table.alphabet() != levels.len() {
            return Err(r.error(format!("table of {} symbols for {} levels", table.alphabet(), levels.len())));
        }
        let spec = QuantizationSpec {
            scheme,
            bits: bits as u32,
            rounding,
            levels,
            seed,
            density_bins: (bins > 0).then_some(bins),
        };
        spec.validate().map_err(|e| r.error(e.to_string()))?;
        (spec, Some(table), 0, used)
    };
    let lut_bytes = r.pos() - lut_start - table_bytes;
    let payload_bits = r.u64_le()?;
    let payload = r.take(payload_bits.div_ceil(8) as usize)?;
    let mut br = BitReader::new(payload, payload_bits)?;
    let codes = match &table {
        Some(table) => table.decode(&mut br, survivors).map_err(|e| r.error(e.to_string()))?,
        None => {
            let mut codes = Vec::with_capacity(survivors);
            for _ in 0..survivors {
                let raw = br.read(width)?;
                codes.push(if width == 32 {
                    (f32::from_bits(raw as u32) as f64).to_bits()
                } else {
                    raw
                });
            }
            codes
        }
    };
    if br.remaining() != 0 {
        return Err(r.error(format!("{} unused payload bits", br.remaining())));
    }
    let stats = LayerStats {
        params: len,
        survivors,
        mask_encoding: encoding,
        mask_bytes: mask_len,
        lut_bytes,
        table_bytes,
        payload_bits,
        bytes: r.pos(),
    };
    Ok((
        QuantizedTensor {
            shape,
            mask,
            spec,
            codes,
        },
        stats,
    ))
}

/// The packed container: `"DEVP"`, version u16, layer count u32, the
/// layer records, then a CRC32 (IEEE) of everything before it.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedModel {
    bytes: Vec<u8>,
    layers: Vec<LayerStats>,
}

impl PackedModel {
    pub fn pack(model: &QuantizedModel) -> Result<Self> {
        PackedModel::pack_with(model, &Executor::sequential())
    }

    /// Layers are encoded on `exec`; the output does not depend on it.
    pub fn pack_with(model: &QuantizedModel, exec: &Executor) -> Result<Self> {
        let encoded = exec.try_map(model.tensors.len(), |i| encode_layer(&model.tensors[i]))?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(model.tensors.len() as u32).to_le_bytes());
        let mut layers = Vec::with_capacity(encoded.len());
        for (b, s) in encoded {
            bytes.extend_from_slice(&b);
            layers.push(s);
        }
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        Ok(PackedModel { bytes, layers })
    }

    /// Checks the CRC and parses every layer.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let (_, layers) = parse(&bytes)?;
        Ok(PackedModel { bytes, layers })
    }

    pub fn unpack(&self) -> Result<QuantizedModel> {
        Ok(parse(&self.bytes)?.0)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn layers(&self) -> &[LayerStats] {
        &self.layers
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PackedModel::from_bytes(std::fs::read(path)?)
    }
}

fn parse(bytes: &[u8]) -> Result<(QuantizedModel, Vec<LayerStats>)> {
    if bytes.len() < MAGIC.len() + 2 + 4 + 4 {
        return Err(Error::Truncated(format!("{} bytes is too short for a packed model", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    let mut r = ByteReader::new(body, "packed model");
    r.expect_magic(MAGIC)?;
    let version = r.u16_le()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let count = r.u32_le()? as usize;
    let mut tensors = Vec::new();
    let mut stats = Vec::new();
    let mut pos = r.pos();
    for _ in 0..count {
        let (t, s) = decode_layer(&body[pos..]).map_err(|e| match e {
            Error::Format { what, offset, msg } => Error::Format {
                what,
                offset: pos + offset,
                msg,
            },
            other => other,
        })?;
        pos += s.bytes;
        tensors.push(t);
        stats.push(s);
    }
    if pos != body.len() {
        return Err(Error::format("packed model", pos, "trailing bytes after the last layer"));
    }
    Ok((QuantizedModel { tensors }, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    /// Parameters of the dense original, each counted at 32 bits.
    pub params: usize,
    pub payload_bits: u64,
    pub total_bits: u64,
    /// `32·params / payload_bits`.
    pub payload_ratio: f64,
    /// `32·params / total_bits`, masks, tables and header included.
    pub total_ratio: f64,
}

pub fn compression_report(original: &Network, packed: &PackedModel) -> Result<CompressionReport> {
    let params = original.param_count();
    if original.params().len() != packed.layers.len() || packed.layers.iter().map(|l| l.params).sum::<usize>() != params {
        return Err(Error::Shape("packed model does not match the network".into()));
    }
    let payload_bits: u64 = packed.layers.iter().map(|l| l.payload_bits).sum();
    let total_bits = packed.bytes.len() as u64 * 8;
    let dense = 32.0 * params as f64;
    Ok(CompressionReport {
        params,
        payload_bits,
        total_bits,
        payload_ratio: if payload_bits == 0 { f64::INFINITY } else { dense / payload_bits as f64 },
        total_ratio: dense / total_bits as f64,
    })
}
