//! Versioned binary model container.
//!
//! ```text
//! "HBM1"                      magic + format version
//! u32  layer count
//! u32  input rank, then rank x u32 input extents
//! per layer:
//!   u8   type tag (1 Linear, 2 Conv2D, 3 MaxPool2D, 4 ReLU, 5 Flatten)
//!   u32* shape header (Linear: in, out; Conv2D: in_c, out_c, kh, kw, stride, pad;
//!        MaxPool2D: window, stride; ReLU/Flatten: none)
//!   f64* parameters (weights then biases)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::layer::{Conv2d, Layer, Linear, MaxPool2d};
use super::model::Model;
use super::NetError;

pub const MAGIC_PREFIX: &[u8; 3] = b"HBM";
pub const FORMAT_VERSION: u8 = b'1';

const TAG_LINEAR: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_RELU: u8 = 4;
const TAG_FLATTEN: u8 = 5;

const MAX_RANK: usize = 8;

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.parameter_count() * 8);
    out.extend_from_slice(MAGIC_PREFIX);
    out.push(FORMAT_VERSION);
    put_u32(&mut out, model.layers().len());
    put_u32(&mut out, model.input_shape().len());
    for &d in model.input_shape() {
        put_u32(&mut out, d);
    }
    for layer in model.layers() {
        match layer {
            Layer::Linear(l) => {
                out.push(TAG_LINEAR);
                put_u32(&mut out, l.in_features());
                put_u32(&mut out, l.out_features());
                put_f64s(&mut out, l.weights());
                put_f64s(&mut out, l.bias());
            }
            Layer::Conv2d(c) => {
                out.push(TAG_CONV);
                let (kh, kw) = c.kernel();
                for v in [c.in_channels(), c.out_channels(), kh, kw, c.stride(), c.padding()] {
                    put_u32(&mut out, v);
                }
                put_f64s(&mut out, c.weights());
                put_f64s(&mut out, c.bias());
            }
            Layer::MaxPool2d(p) => {
                out.push(TAG_POOL);
                put_u32(&mut out, p.window());
                put_u32(&mut out, p.stride());
            }
            Layer::ReLU => out.push(TAG_RELU),
            Layer::Flatten => out.push(TAG_FLATTEN),
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Model, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if &magic[..3] != MAGIC_PREFIX {
        return Err(NetError::Format(format!("bad magic {magic:02x?}")));
    }
    if magic[3] != FORMAT_VERSION {
        return Err(NetError::VersionMismatch {
            found: magic[3],
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32()? as usize;
    let rank = r.u32()? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(NetError::Format(format!("unsupported input rank {rank}")));
    }
    let input_shape = (0..rank)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    // every layer needs at least its tag byte
    if count > r.remaining() {
        return Err(NetError::Truncated {
            offset: r.pos,
            needed: count,
        });
    }
    let mut layers = Vec::with_capacity(count);
    for index in 0..count {
        let tag_offset = r.pos;
        let tag = r.take(1)?[0];
        let invalid = |e: NetError| match e {
            NetError::InvalidLayer(reason) => NetError::LayerShape { layer: index, reason },
            other => other,
        };
        let layer = match tag {
            TAG_LINEAR => {
                let n_in = r.u32()? as usize;
                let n_out = r.u32()? as usize;
                let weights = r.f64s(n_in.checked_mul(n_out))?;
                let bias = r.f64s(Some(n_out))?;
                Layer::Linear(Linear::new(n_in, n_out, weights, bias).map_err(invalid)?)
            }
            TAG_CONV => {
                let mut h = [0usize; 6];
                for v in h.iter_mut() {
                    *v = r.u32()? as usize;
                }
                let [in_c, out_c, kh, kw, stride, pad] = h;
                let n = in_c
                    .checked_mul(out_c)
                    .and_then(|v| v.checked_mul(kh))
                    .and_then(|v| v.checked_mul(kw));
                let weights = r.f64s(n)?;
                let bias = r.f64s(Some(out_c))?;
                Layer::Conv2d(
                    Conv2d::new(in_c, out_c, kh, kw, stride, pad, weights, bias).map_err(invalid)?,
                )
            }
            TAG_POOL => {
                let window = r.u32()? as usize;
                let stride = r.u32()? as usize;
                Layer::MaxPool2d(MaxPool2d::new(window, stride).map_err(invalid)?)
            }
            TAG_RELU => Layer::ReLU,
            TAG_FLATTEN => Layer::Flatten,
            other => {
                return Err(NetError::Format(format!(
                    "unknown layer tag {other} for layer {index} at offset {tag_offset}"
                )))
            }
        };
        layers.push(layer);
    }
    if r.remaining() != 0 {
        return Err(NetError::Format(format!(
            "{} trailing bytes after last layer",
            r.remaining()
        )));
    }
    Model::new(input_shape, layers)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, NetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_model(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.remaining() < n {
            return Err(NetError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: Option<usize>) -> Result<Vec<f64>, NetError> {
        let n = n.ok_or_else(|| NetError::Format("parameter count overflows".into()))?;
        let len = n
            .checked_mul(8)
            .ok_or_else(|| NetError::Format("parameter count overflows".into()))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}
