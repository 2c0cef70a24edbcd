//! Tensor-table files: 4-byte magic, u32 tensor count, then per tensor a
//! u16 name length, UTF-8 name, u8 dtype (0 = f32, 1 = u32), u8 rank,
//! `rank` u32 dims, and the row-major payload. Little-endian throughout.
//! Model weights use magic `KWM1` with a leading `meta` tensor holding the
//! six config values.

use thiserror::Error;

use super::{EncoderConfig, ModelWeights};
use crate::params::Parameters;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"KWM1";
const DTYPE_F32: u8 = 0;
const DTYPE_U32: u8 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    Magic { expected: String },
    #[error("file truncated")]
    Truncated,
    #[error("unknown dtype {0}")]
    Dtype(u8),
    #[error("tensor name is not UTF-8")]
    Name,
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("unexpected tensor {0}")]
    Unexpected(String),
    #[error("tensor {name}: expected dims {expected:?}, got {got:?}")]
    Dims { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid meta tensor: {0}")]
    Meta(String),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl TensorEntry {
    pub fn f32(name: impl Into<String>, dims: Vec<usize>, values: impl IntoIterator<Item = f64>) -> Self {
        Self { name: name.into(), dims, data: TensorData::F32(values.into_iter().map(|v| v as f32).collect()) }
    }

    pub fn u32(name: impl Into<String>, values: Vec<u32>) -> Self {
        Self { name: name.into(), dims: vec![values.len()], data: TensorData::U32(values) }
    }
}

pub fn write_table(magic: &[u8; 4], entries: &[TensorEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        let dtype = match e.data {
            TensorData::F32(_) => DTYPE_F32,
            TensorData::U32(_) => DTYPE_U32,
        };
        out.push(dtype);
        out.push(e.dims.len() as u8);
        for &d in &e.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &e.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_table(magic: &[u8; 4], bytes: &[u8]) -> Result<Vec<TensorEntry>, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| bad_magic(magic))? != magic {
        return Err(bad_magic(magic));
    }
    let count = r.u32()?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| FormatError::Name)?.to_string();
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(FormatError::Truncated)?;
        let payload = r.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        let words = payload.chunks_exact(4).map(|c| <[u8; 4]>::try_from(c).unwrap());
        let data = match dtype {
            DTYPE_F32 => TensorData::F32(words.map(f32::from_le_bytes).collect()),
            DTYPE_U32 => TensorData::U32(words.map(u32::from_le_bytes).collect()),
            other => return Err(FormatError::Dtype(other)),
        };
        entries.push(TensorEntry { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(FormatError::Trailing(bytes.len() - r.pos));
    }
    Ok(entries)
}

fn bad_magic(magic: &[u8; 4]) -> FormatError {
    FormatError::Magic { expected: String::from_utf8_lossy(magic).into_owned() }
}

pub(crate) fn meta_entry(c: &EncoderConfig) -> TensorEntry {
    let v = [c.freq_bins, c.time_steps, c.dim, c.proj_dim, c.blocks, c.n_classes];
    TensorEntry::u32("meta", v.iter().map(|&x| x as u32).collect())
}

pub(crate) fn parse_meta(entry: Option<&TensorEntry>) -> Result<EncoderConfig, FormatError> {
    let e = entry.ok_or_else(|| FormatError::Missing("meta".into()))?;
    match (&e.name[..], &e.data) {
        ("meta", TensorData::U32(v)) if v.len() == 6 => {
            let c = EncoderConfig {
                freq_bins: v[0] as usize,
                time_steps: v[1] as usize,
                dim: v[2] as usize,
                proj_dim: v[3] as usize,
                blocks: v[4] as usize,
                n_classes: v[5] as usize,
            };
            c.validate().map_err(|err| FormatError::Meta(err.to_string()))?;
            Ok(c)
        }
        ("meta", _) => Err(FormatError::Meta("expected six u32 values".into())),
        _ => Err(FormatError::Missing("meta".into())),
    }
}

/// One f32 entry per parameter, named `prefix + param name`.
pub(crate) fn params_table<P: Parameters>(prefix: &str, params: &P) -> Vec<TensorEntry> {
    params
        .params()
        .into_iter()
        .map(|p| TensorEntry::f32(format!("{prefix}{}", p.name), p.shape.clone(), p.data.iter().copied()))
        .collect()
}

/// Fills `target` from f32 entries named `prefix + param name`, in order.
pub(crate) fn fill_params<P: Parameters>(
    target: &mut P,
    prefix: &str,
    entries: &mut impl Iterator<Item = TensorEntry>,
) -> Result<(), FormatError> {
    for p in target.params_mut() {
        let name = format!("{prefix}{}", p.name);
        let e = entries.next().ok_or_else(|| FormatError::Missing(name.clone()))?;
        if e.name != name {
            return Err(FormatError::Unexpected(e.name));
        }
        if e.dims != p.shape || e.data.len() != p.data.len() {
            return Err(FormatError::Dims { name, expected: p.shape.clone(), got: e.dims });
        }
        match e.data {
            TensorData::F32(v) => p.data.iter_mut().zip(v).for_each(|(d, s)| *d = s as f64),
            TensorData::U32(_) => return Err(FormatError::Dtype(DTYPE_U32)),
        }
    }
    Ok(())
}

pub fn save_weights(weights: &ModelWeights) -> Vec<u8> {
    let mut entries = vec![meta_entry(&weights.config)];
    entries.extend(params_table("", weights));
    write_table(WEIGHTS_MAGIC, &entries)
}

pub fn load_weights(bytes: &[u8]) -> Result<ModelWeights, FormatError> {
    let entries = read_table(WEIGHTS_MAGIC, bytes)?;
    let config = parse_meta(entries.first())?;
    let mut weights = ModelWeights::zeros(config).map_err(|e| FormatError::Meta(e.to_string()))?;
    let mut rest = entries.into_iter().skip(1);
    fill_params(&mut weights, "", &mut rest)?;
    if let Some(extra) = rest.next() {
        return Err(FormatError::Unexpected(extra.name));
    }
    Ok(weights)
}
