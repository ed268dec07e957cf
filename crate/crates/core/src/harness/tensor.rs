//! Binary tensor container: magic `CTSR`, u32 version, dtype byte, ndim
//! byte, u32 dims, then a row-major little-endian payload.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CTSR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::U8(_) => 1,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        let expected: usize = dims.iter().map(|&d| d as usize).product();
        if expected != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} describe {expected} values but {} were given",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Format("too many dimensions".into()));
        }
        Ok(Self { dims, data })
    }

    /// `f64` values stored as `f32`.
    pub fn from_f64(dims: Vec<u32>, values: &[f64]) -> Result<Self> {
        Self::new(dims, TensorData::F32(values.iter().map(|&v| v as f32).collect()))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.data.code());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(fail("missing CTSR magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let code = bytes[8];
        let ndim = bytes[9] as usize;
        let header = 10 + 4 * ndim;
        if bytes.len() < header {
            return Err(fail("truncated header"));
        }
        let dims: Vec<u32> = bytes[10..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let payload = &bytes[header..];
        let data = match code {
            0 => {
                if payload.len() != 4 * count {
                    return Err(fail("payload length does not match dims"));
                }
                TensorData::F32(
                    payload
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                )
            }
            1 => {
                if payload.len() != count {
                    return Err(fail("payload length does not match dims"));
                }
                TensorData::U8(payload.to_vec())
            }
            c => return Err(Error::Format(format!("unknown dtype code {c}"))),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
