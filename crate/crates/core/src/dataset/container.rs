//! `LXPF` tensor container: magic, u32 version, then per tensor a u32 dtype
//! code, u32 rank, u64 dims and the raw payload, all little-endian. Names and
//! metadata live in a JSON manifest next to the binary file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LXPF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F16,
    F64,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 0,
            DType::F16 => 1,
            DType::F64 => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F16),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F16(Vec<f16>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F16(_) => DType::F16,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F16(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            TensorData::F32(v) => v.clone(),
            TensorData::F16(v) => v.iter().map(|x| x.to_f32()).collect(),
            TensorData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F16(v) => v.iter().map(|x| x.to_f64()).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor {name}: shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }

    /// f32 values stored as `dtype` (f32 or f16).
    pub fn from_f32(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>, dtype: DType) -> Result<Self> {
        let data = match dtype {
            DType::F32 => TensorData::F32(values),
            DType::F16 => TensorData::F16(values.into_iter().map(f16::from_f32).collect()),
            DType::F64 => TensorData::F64(values.into_iter().map(f64::from).collect()),
        };
        Self::new(name, shape, data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<u64>,
    /// Byte offset of the tensor header.
    pub offset: u64,
    pub payload_offset: u64,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
    pub meta: serde_json::Value,
}

impl ContainerManifest {
    pub fn find(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }
}

pub fn encode_tensors(tensors: &[Tensor]) -> (Vec<u8>, Vec<TensorEntry>) {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        let offset = out.len() as u64;
        out.extend_from_slice(&t.data.dtype().code().to_le_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let payload_offset = out.len() as u64;
        match &t.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            dtype: t.data.dtype(),
            shape: t.shape.iter().map(|&d| d as u64).collect(),
            offset,
            payload_offset,
            payload_bytes: out.len() as u64 - payload_offset,
        });
    }
    (out, entries)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses a container. With `entries`, names come from the manifest and
/// every header must agree with it; otherwise tensors are named by index.
pub fn decode_tensors(bytes: &[u8], entries: Option<&[TensorEntry]>) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected LXPF"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported container version {version}")));
    }
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let offset = r.pos;
        let code = r.u32("dtype")?;
        let dtype = DType::from_code(code)
            .ok_or_else(|| Error::format(offset, format!("unknown dtype code {code}")))?;
        let rank = r.u32("rank")? as usize;
        if rank > 16 {
            return Err(Error::format(offset + 4, format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("dims")?);
        }
        let count = shape
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
            .and_then(|n| n.checked_mul(dtype.size()).map(|b| (n, b)))
            .ok_or_else(|| Error::format(offset, "tensor size overflows"))?;
        let payload_offset = r.pos;
        let payload = r.take(count.1, "payload")?;
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect(),
            ),
            DType::F16 => TensorData::F16(
                payload.chunks_exact(2).map(|c| f16::from_le_bytes(c.try_into().expect("2"))).collect(),
            ),
            DType::F64 => TensorData::F64(
                payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect(),
            ),
        };
        let idx = out.len();
        let name = match entries {
            Some(e) => {
                let entry = e.get(idx).ok_or_else(|| {
                    Error::format(offset, format!("payload holds more than the {} manifest tensors", e.len()))
                })?;
                let header = TensorEntry {
                    name: entry.name.clone(),
                    dtype,
                    shape: shape.clone(),
                    offset: offset as u64,
                    payload_offset: payload_offset as u64,
                    payload_bytes: count.1 as u64,
                };
                if *entry != header {
                    return Err(Error::format(
                        offset,
                        format!("tensor {} disagrees with its manifest entry", entry.name),
                    ));
                }
                entry.name.clone()
            }
            None => idx.to_string(),
        };
        out.push(Tensor {
            name,
            shape: shape.into_iter().map(|d| d as usize).collect(),
            data,
        });
    }
    if let Some(e) = entries {
        if e.len() != out.len() {
            return Err(Error::format(
                bytes.len(),
                format!("manifest lists {} tensors, payload holds {}", e.len(), out.len()),
            ));
        }
    }
    Ok(out)
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    path.with_file_name(name)
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `path` and its `path.json` manifest.
pub fn write_container(path: &Path, tensors: &[Tensor], meta: serde_json::Value) -> Result<ContainerManifest> {
    let (bytes, entries) = encode_tensors(tensors);
    let manifest = ContainerManifest {
        version: VERSION,
        tensors: entries,
        meta,
    };
    write_atomic(path, &bytes)?;
    write_atomic(&manifest_path(path), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_container(path: &Path) -> Result<(ContainerManifest, Vec<Tensor>)> {
    let mpath = manifest_path(path);
    let mbytes = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: ContainerManifest = serde_json::from_slice(&mbytes)?;
    if manifest.version != VERSION {
        return Err(Error::InvalidArgument(format!(
            "manifest version {} is not supported",
            manifest.version
        )));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let tensors = decode_tensors(&bytes, Some(&manifest.tensors))?;
    Ok((manifest, tensors))
}
