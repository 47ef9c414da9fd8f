//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "GRADGRU\0"
//! version      u32      1
//! endianness   u8       b'L'
//! role         u32 length + UTF-8
//! dims         u32 x 5  input, hidden1, hidden2, classes, window
//! schema_hash  u64
//! metadata     u32 length + JSON training record
//! tensors      u32 count, then per tensor:
//!              u32 length + UTF-8 name, u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Tensors are row-major and appear in `TENSOR_NAMES` order. Floats are
//! stored as raw bits, so a load/save round trip is bit-exact.

use std::path::Path;

use grad_core::gru::{GruLayerWeights, GruModel, GruWeights, TrainMeta, TENSOR_NAMES};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GRADGRU\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelFileError {
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("unsupported byte order marker {0:#04x}")]
    Endianness(u8),
    #[error("file ends early")]
    Truncated,
    #[error("tensor {index} is {found:?}, expected {expected:?}")]
    Tensor { index: usize, expected: String, found: String },
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn shapes(w: &GruWeights) -> [(usize, usize); 14] {
    let l = |l: &GruLayerWeights| [(l.hidden, l.cols()), (l.hidden, l.cols()), (l.hidden, l.cols()), (l.hidden, 1), (l.hidden, 1), (l.hidden, 1)];
    let (a, b) = (l(&w.layer1), l(&w.layer2));
    let c = w.classes();
    [a[0], a[1], a[2], a[3], a[4], a[5], b[0], b[1], b[2], b[3], b[4], b[5], (c, w.layer2.hidden), (c, 1)]
}

pub fn encode(model: &GruModel) -> Vec<u8> {
    let w = &model.weights;
    let mut out = Vec::with_capacity(128 + 8 * w.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(b'L');
    put_str(&mut out, &model.role);
    for d in [w.input_dim(), w.layer1.hidden, w.layer2.hidden, w.classes(), model.window] {
        put_u32(&mut out, d);
    }
    out.extend_from_slice(&model.schema_hash.to_le_bytes());
    let meta = serde_json::to_string(&model.meta).expect("metadata serializes");
    put_str(&mut out, &meta);
    put_u32(&mut out, TENSOR_NAMES.len());
    for ((name, t), (rows, cols)) in TENSOR_NAMES.iter().zip(w.tensors()).zip(shapes(w)) {
        put_str(&mut out, name);
        put_u32(&mut out, rows);
        put_u32(&mut out, cols);
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        if self.buf.len() < n {
            return Err(ModelFileError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, ModelFileError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ModelFileError::Metadata(e.to_string()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<GruModel, ModelFileError> {
    let mut c = Cursor { buf: bytes };
    if c.take(8)? != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = c.u32()? as u32;
    if version != VERSION {
        return Err(ModelFileError::Version(version));
    }
    let marker = c.take(1)?[0];
    if marker != b'L' {
        return Err(ModelFileError::Endianness(marker));
    }
    let role = c.string()?;
    let [input, h1, h2, classes, window] = [c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?];
    if input == 0 || h1 == 0 || h2 == 0 || classes < 2 || window == 0 {
        return Err(ModelFileError::Invalid(format!("dimensions {input}/{h1}/{h2}/{classes}/{window}")));
    }
    let schema_hash = c.u64()?;
    let meta: TrainMeta =
        serde_json::from_str(&c.string()?).map_err(|e| ModelFileError::Metadata(e.to_string()))?;
    let mut weights = GruWeights::zeros(input, [h1, h2], classes);
    let count = c.u32()?;
    if count != TENSOR_NAMES.len() {
        return Err(ModelFileError::Invalid(format!("{count} tensors")));
    }
    let expected_shapes = shapes(&weights);
    for (index, (slot, (rows, cols))) in weights.tensors_mut().into_iter().zip(expected_shapes).enumerate() {
        let name = c.string()?;
        let (r, k) = (c.u32()?, c.u32()?);
        if name != TENSOR_NAMES[index] || (r, k) != (rows, cols) {
            return Err(ModelFileError::Tensor {
                index,
                expected: format!("{} {rows}x{cols}", TENSOR_NAMES[index]),
                found: format!("{name} {r}x{k}"),
            });
        }
        let raw = c.take(8 * r * k)?;
        *slot = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    }
    if !c.buf.is_empty() {
        return Err(ModelFileError::Trailing(c.buf.len()));
    }
    weights.validate().map_err(|e| ModelFileError::Invalid(e.to_string()))?;
    Ok(GruModel { weights, window, schema_hash, role, meta })
}

pub fn save(path: &Path, model: &GruModel) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, encode(model)).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<GruModel> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
