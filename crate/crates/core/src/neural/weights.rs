//! Binary weight container shared with the training tooling.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size   field
//! 0       4      magic "NMWF"
//! 4       2      version, u16 = 1
//! 6       1      model kind, u8: 0 = GRU, 1 = U-Net
//! 7       4      tensor count, u32
//! 11      ...    directory, one entry per tensor:
//!                  u16 name length, UTF-8 name,
//!                  u8 rank, rank x u32 dims,
//!                  u64 byte offset of the data from the start of the payload
//! ...     ...    payload: f32 little-endian values, row-major
//! ```
//!
//! The payload begins at the first byte after the directory. Tensor names and
//! dims must match the schema of the declared model kind exactly; extra,
//! missing or misshapen tensors are rejected.

use std::collections::HashSet;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gru, unet, ModelKind};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NMWF";
pub const VERSION: u16 = 1;

/// Name and dims of one tensor in a model schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, dims: &[usize]) -> Self {
        Self {
            name: name.into(),
            dims: dims.to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Tensor list, in file order, for a model kind.
pub fn schema(kind: ModelKind) -> Vec<TensorSpec> {
    match kind {
        ModelKind::Gru => gru::schema(),
        ModelKind::Unet => unet::schema(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// An in-memory weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub kind: ModelKind,
    pub tensors: Vec<Tensor>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "unexpected end of file while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl WeightFile {
    /// A file for `kind` with every value produced by `fill`, in schema order.
    pub fn from_fn(kind: ModelKind, mut fill: impl FnMut(&TensorSpec, usize) -> f32) -> Self {
        let tensors = schema(kind)
            .into_iter()
            .map(|spec| {
                let data = (0..spec.numel()).map(|i| fill(&spec, i)).collect();
                Tensor {
                    name: spec.name,
                    dims: spec.dims,
                    data,
                }
            })
            .collect();
        Self { kind, tensors }
    }

    pub fn zeros(kind: ModelKind) -> Self {
        Self::from_fn(kind, |_, _| 0.0)
    }

    /// Uniform weights in `[-bound, bound]` with `bound = scale / sqrt(fan_in)`.
    pub fn random(kind: ModelKind, seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(kind, |spec, _| {
            let fan_in = match spec.dims.as_slice() {
                [_] => 1,
                // GRU matrices are stored input-major.
                [a, _] if kind == ModelKind::Gru => *a,
                [_, b] => *b,
                [_, k1, k2] => k1 * k2,
                [_, b, k1, k2] => b * k1 * k2,
                _ => 1,
            };
            let bound = scale / (fan_in as f32).sqrt();
            rng.random_range(-bound..=bound)
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Checks names and dims against the model schema.
    pub fn validate(&self) -> Result<()> {
        let expected = schema(self.kind);
        let mut seen = HashSet::new();
        for t in &self.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::schema(&t.name, "duplicate tensor"));
            }
            let spec = expected.iter().find(|s| s.name == t.name).ok_or_else(|| {
                Error::schema(&t.name, format!("not part of the {} schema", self.kind))
            })?;
            if spec.dims != t.dims {
                return Err(Error::schema(
                    &t.name,
                    format!("dims {:?} do not match expected {:?}", t.dims, spec.dims),
                ));
            }
            if t.data.len() != spec.numel() {
                return Err(Error::schema(
                    &t.name,
                    format!("holds {} values, expected {}", t.data.len(), spec.numel()),
                ));
            }
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::schema(
                    &t.name,
                    format!("non-finite value at index {i}"),
                ));
            }
        }
        if let Some(missing) = expected.iter().find(|s| !seen.contains(s.name.as_str())) {
            return Err(Error::schema(&missing.name, "missing"));
        }
        Ok(())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected \"NMWF\""
            )));
        }
        let version = cur.u16("version")?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let kind = match cur.u8("model kind")? {
            0 => ModelKind::Gru,
            1 => ModelKind::Unet,
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        let count = cur.u32("tensor count")? as usize;

        let mut directory = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = cur.u16("name length")? as usize;
            let name = std::str::from_utf8(cur.take(len, "tensor name")?)
                .map_err(|_| Error::Format("tensor name is not valid UTF-8".into()))?
                .to_owned();
            let rank = cur.u8("rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32("dim")? as usize);
            }
            let offset = cur.u64("data offset")?;
            directory.push((name, dims, offset));
        }

        let payload = &bytes[cur.pos..];
        let mut tensors = Vec::with_capacity(directory.len());
        for (name, dims, offset) in directory {
            let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let span = numel.and_then(|n| n.checked_mul(4)).and_then(|b| {
                usize::try_from(offset)
                    .ok()
                    .and_then(|o| o.checked_add(b).map(|end| (o, end)))
            });
            let (start, end) = match span {
                Some((s, e)) if e <= payload.len() => (s, e),
                _ => {
                    return Err(Error::schema(
                        &name,
                        format!(
                            "data at offset {offset} runs past the end of the {}-byte payload",
                            payload.len()
                        ),
                    ))
                }
            };
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }

        let file = Self { kind, tensors };
        file.validate()?;
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes)
    }

    /// Serializes with tensors packed back to back in their current order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.data.len() as u64;
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
