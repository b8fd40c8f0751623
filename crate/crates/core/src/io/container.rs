//! Binary tensor container. Byte layout (all integers little-endian):
//!
//! ```text
//! 0     8 bytes   magic "VHLTENS\0"
//! 8     u32       format version
//! 12    u64       header length H
//! 20    H bytes   UTF-8 JSON header
//! 20+H  ...       array payloads, in header order, no padding
//! ```
//!
//! See `docs/format.md` for the header schema.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"VHLTENS\0";
pub const VERSION: u32 = 1;
const PREFIX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
    I64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F64 | Dtype::I64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I64(Vec<i64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::I64(_) => Dtype::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::F32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(dtype: Dtype, bytes: &[u8]) -> ArrayData {
        match dtype {
            Dtype::F64 => {
                ArrayData::F64(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            Dtype::F32 => {
                ArrayData::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            Dtype::I64 => {
                ArrayData::I64(bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub units: String,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    dtype: Dtype,
    dims: Vec<usize>,
    units: String,
    offset: u64,
    bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    /// What the file holds, e.g. "ensemble" or "products".
    pub kind: String,
    pub producer: String,
    pub config_hash: String,
    /// SHA-256 over array descriptors, attributes, config hash and payload.
    pub content_hash: String,
    /// Seconds since the Unix epoch; not part of the content hash.
    pub created_unix: u64,
    pub attributes: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arrays: Vec<ArrayEntry>,
    metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub kind: String,
    pub config_hash: String,
    pub attributes: serde_json::Map<String, serde_json::Value>,
    pub arrays: Vec<NamedArray>,
    pub created_unix: u64,
}

/// Creation time, honouring `SOURCE_DATE_EPOCH` for reproducible files.
fn now_unix() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return v;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl TensorContainer {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        Self {
            kind: kind.into(),
            config_hash: config_hash.into(),
            attributes: serde_json::Map::new(),
            arrays: Vec::new(),
            created_unix: now_unix(),
        }
    }

    pub fn set_attribute(&mut self, key: &str, value: impl Serialize) {
        self.attributes.insert(key.into(), serde_json::to_value(value).expect("attribute serializes"));
    }

    pub fn attribute<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self.attributes.get(key).ok_or_else(|| Error::Data(format!("missing attribute {key:?}")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Data(format!("attribute {key:?}: {e}")))
    }

    pub fn push(&mut self, name: &str, dims: &[usize], units: &str, data: ArrayData) -> Result<()> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!("{name}: dims {dims:?} hold {n} values, got {}", data.len())));
        }
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::Data(format!("duplicate array {name:?}")));
        }
        self.arrays.push(NamedArray { name: name.into(), dims: dims.to_vec(), units: units.into(), data });
        Ok(())
    }

    pub fn push_f64(&mut self, name: &str, dims: &[usize], units: &str, data: Vec<f64>) -> Result<()> {
        self.push(name, dims, units, ArrayData::F64(data))
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name).ok_or_else(|| Error::Data(format!("missing array {name:?}")))
    }

    pub fn f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::F64(v) => Ok((&a.dims, v)),
            _ => Err(Error::Data(format!("array {name:?} is not f64"))),
        }
    }

    pub fn i64(&self, name: &str) -> Result<(&[usize], &[i64])> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::I64(v) => Ok((&a.dims, v)),
            _ => Err(Error::Data(format!("array {name:?} is not i64"))),
        }
    }

    fn entries_and_payload(&self) -> (Vec<ArrayEntry>, Vec<u8>) {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        for a in &self.arrays {
            let offset = payload.len() as u64;
            a.data.write_le(&mut payload);
            entries.push(ArrayEntry {
                name: a.name.clone(),
                dtype: a.data.dtype(),
                dims: a.dims.clone(),
                units: a.units.clone(),
                offset,
                bytes: payload.len() as u64 - offset,
            });
        }
        (entries, payload)
    }

    fn hash_parts(&self, entries: &[ArrayEntry], payload: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.as_bytes());
        h.update(serde_json::to_vec(entries).expect("entries serialize"));
        h.update(serde_json::to_vec(&self.attributes).expect("attributes serialize"));
        h.update(self.config_hash.as_bytes());
        h.update(payload);
        hex::encode(h.finalize())
    }

    /// Hash of everything except the creation time.
    pub fn content_hash(&self) -> String {
        let (entries, payload) = self.entries_and_payload();
        self.hash_parts(&entries, &payload)
    }

    fn header(&self, entries: Vec<ArrayEntry>, payload: &[u8]) -> Header {
        Header {
            metadata: Metadata {
                kind: self.kind.clone(),
                producer: format!("vanhove-lab {}", env!("CARGO_PKG_VERSION")),
                config_hash: self.config_hash.clone(),
                content_hash: self.hash_parts(&entries, payload),
                created_unix: self.created_unix,
                attributes: self.attributes.clone(),
            },
            arrays: entries,
        }
    }

    /// The JSON header as a standalone value, for metadata sidecars.
    pub fn sidecar(&self) -> serde_json::Value {
        let (entries, payload) = self.entries_and_payload();
        serde_json::to_value(self.header(entries, &payload)).expect("header serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (entries, payload) = self.entries_and_payload();
        let header = self.header(entries, &payload);
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREFIX + json.len() + payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREFIX || bytes[..8] != MAGIC {
            return Err(Error::Data("not a tensor container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Data(format!("container version {version} is not supported (expected {VERSION})")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(PREFIX..PREFIX + hlen).ok_or_else(|| Error::Data("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Data(format!("malformed container header: {e}")))?;
        let payload = &bytes[PREFIX + hlen..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in &header.arrays {
            let start = e.offset as usize;
            let end = start + e.bytes as usize;
            let n: usize = e.dims.iter().product();
            if end > payload.len() || n * e.dtype.size() != e.bytes as usize {
                return Err(Error::Data(format!("array {:?} is truncated or mis-sized", e.name)));
            }
            arrays.push(NamedArray {
                name: e.name.clone(),
                dims: e.dims.clone(),
                units: e.units.clone(),
                data: ArrayData::read_le(e.dtype, &payload[start..end]),
            });
        }
        let m = header.metadata;
        let c = Self {
            kind: m.kind,
            config_hash: m.config_hash,
            attributes: m.attributes,
            arrays,
            created_unix: m.created_unix,
        };
        if c.content_hash() != m.content_hash {
            return Err(Error::Data("content hash mismatch: file is corrupted".into()));
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
