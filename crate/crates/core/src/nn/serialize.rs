//! The `DEVN` binary model format.
//!
//! ```text
//! "DEVN" | version u16 | input rank u8 | input dims u32… | layer count u32
//! per layer: kind u8 | hyperparameters | param count u8
//!            per param: rank u8 | dims u32… | values f64…
//! ```
//! All multi-byte values are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::ByteReader;
use crate::nn::layer::{Layer, Padding};
use crate::nn::network::Network;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"DEVN";
pub const MODEL_VERSION: u16 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_LEAKY: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_POOL: u8 = 5;
const TAG_SOFTMAX: u8 = 6;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_tensor(r: &mut ByteReader) -> Result<Tensor> {
    let rank = r.u8()? as usize;
    let dims = (0..rank)
        .map(|_| r.u32_le().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = dims.iter().product();
    if n * 8 > r.remaining() {
        return Err(r.error(format!("tensor {dims:?} exceeds remaining data")));
    }
    let data = (0..n).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
    Tensor::new(dims, data)
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(net.input_shape().len() as u8);
    for &d in net.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Dense { .. } => out.push(TAG_DENSE),
            Layer::Conv2D {
                stride, padding, ..
            } => {
                out.push(TAG_CONV);
                put_u32(&mut out, *stride);
                out.push(match padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                });
            }
            Layer::LeakyReLU { slope } => {
                out.push(TAG_LEAKY);
                out.extend_from_slice(&slope.to_le_bytes());
            }
            Layer::ReLU => out.push(TAG_RELU),
            Layer::Flatten => out.push(TAG_FLATTEN),
            Layer::MaxPool2D { size, stride } => {
                out.push(TAG_POOL);
                put_u32(&mut out, *size);
                put_u32(&mut out, *stride);
            }
            Layer::Softmax => out.push(TAG_SOFTMAX),
        }
        let params = layer.params();
        out.push(params.len() as u8);
        for t in params {
            put_tensor(&mut out, t);
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = ByteReader::new(bytes, "model file");
    r.expect_magic(MODEL_MAGIC)?;
    let version = r.u16_le()?;
    if version != MODEL_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let rank = r.u8()? as usize;
    let input_shape = (0..rank)
        .map(|_| r.u32_le().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let count = r.u32_le()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let at = r.pos();
        let tag = r.u8()?;
        let hyper = match tag {
            TAG_CONV => {
                let stride = r.u32_le()? as usize;
                let padding = match r.u8()? {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(r.error(format!("unknown padding tag {p}"))),
                };
                Some((stride, padding))
            }
            _ => None,
        };
        let layer = match tag {
            TAG_LEAKY => Layer::LeakyReLU { slope: r.f64_le()? },
            TAG_POOL => {
                let size = r.u32_le()? as usize;
                let stride = r.u32_le()? as usize;
                Layer::MaxPool2D { size, stride }
            }
            TAG_RELU => Layer::ReLU,
            TAG_FLATTEN => Layer::Flatten,
            TAG_SOFTMAX => Layer::Softmax,
            TAG_DENSE | TAG_CONV => Layer::ReLU, // placeholder, parameters follow
            t => return Err(Error::format("model file", at, format!("unknown layer tag {t}"))),
        };
        let np = r.u8()? as usize;
        let mut params = (0..np).map(|_| get_tensor(&mut r)).collect::<Result<Vec<_>>>()?;
        let layer = match tag {
            TAG_DENSE | TAG_CONV => {
                if params.len() != 2 {
                    return Err(Error::format("model file", at, "expected 2 parameter tensors"));
                }
                let bias = params.pop().unwrap();
                let first = params.pop().unwrap();
                match hyper {
                    Some((stride, padding)) => Layer::Conv2D {
                        kernel: first,
                        bias,
                        stride,
                        padding,
                    },
                    None => Layer::Dense {
                        weights: first,
                        bias,
                    },
                }
            }
            _ if np != 0 => {
                return Err(Error::format("model file", at, "unexpected parameters"));
            }
            _ => layer,
        };
        layers.push(layer);
    }
    if r.remaining() != 0 {
        return Err(r.error("trailing bytes"));
    }
    Network::new(input_shape, layers)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    from_bytes(&std::fs::read(path)?)
}
