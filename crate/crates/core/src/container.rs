//! Named-array container used for checkpoints and feature caches.
//!
//! Layout (little-endian): magic `TFV1`, `u32` array count, then per array
//! `u16` name length, UTF-8 name, `u8` dtype (0 = f32, 1 = f64, 2 = u8),
//! `u8` rank, `u32` dims, raw data. A CRC32 of all preceding bytes closes
//! the file.

use std::fs;
use std::io::Write;
use std::path::Path;

use autodiff::{Real, Tensor};
use indexmap::IndexMap;

use crate::error::{Result, VocoderError};

pub const MAGIC: &[u8; 4] = b"TFV1";

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl ArrayData {
    fn code(&self) -> u8 {
        match self {
            ArrayData::F32(_) => 0,
            ArrayData::F64(_) => 1,
            ArrayData::U8(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    fn dtype_name(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::F64(_) => "f64",
            ArrayData::U8(_) => "u8",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    arrays: IndexMap<String, Array>,
}

fn real_data<T: Real>(data: &[T]) -> ArrayData {
    if T::BYTES == 4 {
        ArrayData::F32(data.iter().map(|v| v.as_f64() as f32).collect())
    } else {
        ArrayData::F64(data.iter().map(|v| v.as_f64()).collect())
    }
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: ArrayData) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(VocoderError::Format(format!("array name too long: {name}")));
        }
        if shape.len() > u8::MAX as usize || shape.iter().any(|&d| d > u32::MAX as usize) {
            return Err(VocoderError::Format(format!("{name}: shape {shape:?} not representable")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(VocoderError::Format(format!(
                "{name}: shape {shape:?} does not match {} elements",
                data.len()
            )));
        }
        if self.arrays.contains_key(&name) {
            return Err(VocoderError::Format(format!("duplicate array {name}")));
        }
        self.arrays.insert(name, Array { shape, data });
        Ok(())
    }

    pub fn insert_tensor<T: Real>(&mut self, name: impl Into<String>, t: &Tensor<T>) -> Result<()> {
        self.insert(name, t.shape().to_vec(), real_data(t.data()))
    }

    pub fn insert_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) -> Result<()> {
        self.insert(name, vec![bytes.len()], ArrayData::U8(bytes.to_vec()))
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.arrays
            .get(name)
            .ok_or_else(|| VocoderError::Format(format!("missing array {name}")))
    }

    /// Reads a real array; its stored precision must match `T`.
    pub fn tensor<T: Real>(&self, name: &str) -> Result<Tensor<T>> {
        let a = self.get(name)?;
        let data: Vec<T> = match (&a.data, T::BYTES) {
            (ArrayData::F32(v), 4) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            (ArrayData::F64(v), 8) => v.iter().map(|&x| T::from_f64(x)).collect(),
            (other, _) => {
                return Err(VocoderError::Format(format!(
                    "{name}: stored as {}, requested {}",
                    other.dtype_name(),
                    T::NAME
                )))
            }
        };
        Ok(Tensor::new(a.shape.clone(), data)?)
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match &self.get(name)?.data {
            ArrayData::U8(v) => Ok(v),
            other => Err(VocoderError::Format(format!("{name}: stored as {}, requested u8", other.dtype_name()))),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(a.data.code());
            out.push(a.shape.len() as u8);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match &a.data {
                ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::U8(v) => out.extend_from_slice(v),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(VocoderError::Format(format!("truncated file ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(VocoderError::Version {
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
            });
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(VocoderError::Checksum { stored, computed });
        }
        let mut r = Reader { buf: payload, pos: 4 };
        let count = r.u32()? as usize;
        let mut c = Container::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| VocoderError::Format("array name is not UTF-8".into()))?
                .to_string();
            let code = r.u8()?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let data = match code {
                0 => ArrayData::F32(
                    r.take(n * 4)?
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                        .collect(),
                ),
                1 => ArrayData::F64(
                    r.take(n * 8)?
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                        .collect(),
                ),
                2 => ArrayData::U8(r.take(n)?.to_vec()),
                other => return Err(VocoderError::Format(format!("{name}: unknown dtype code {other}"))),
            };
            c.insert(name, shape, data)?;
        }
        if r.pos != payload.len() {
            return Err(VocoderError::Format(format!(
                "{} trailing bytes after last array",
                payload.len() - r.pos
            )));
        }
        Ok(c)
    }

    /// Writes atomically: temporary file, fsync, rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| VocoderError::io(path, e))?;
        Container::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| VocoderError::Format(format!("truncated: needed {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Replaces `path` with `bytes` via a synced temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| VocoderError::Format(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        VocoderError::io(path, e)
    })
}
