//! `.dsdp` tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes   "DSDP"
//! version  u32       1
//! dtype    u8        1 = f64, 2 = u8
//! ndim     u8
//! dims     ndim x u64
//! payload  product(dims) values, row-major, little-endian
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{dim_mismatch, Error, Result};

pub const MAGIC: [u8; 4] = *b"DSDP";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;
pub const DTYPE_U8: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }
}

/// An n-dimensional row-major tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(dim_mismatch(format!("{} dimensions exceed the format limit", dims.len())));
        }
        let count = element_count(&dims)?;
        if count != data.len() {
            return Err(dim_mismatch(format!("dims {dims:?} need {count} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_matrix(m: &Array2<f64>) -> Self {
        let (r, c) = m.dim();
        let values = m.as_standard_layout().iter().copied().collect();
        Self { dims: vec![r as u64, c as u64], data: TensorData::F64(values) }
    }

    pub fn from_mask(m: &Array2<bool>) -> Self {
        let (r, c) = m.dim();
        let values = m.as_standard_layout().iter().map(|&b| u8::from(b)).collect();
        Self { dims: vec![r as u64, c as u64], data: TensorData::U8(values) }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Self { dims: vec![v.len() as u64], data: TensorData::F64(v.to_vec()) }
    }

    pub fn dtype_code(&self) -> u8 {
        match self.data {
            TensorData::F64(_) => DTYPE_F64,
            TensorData::U8(_) => DTYPE_U8,
        }
    }

    /// Interprets a 2-D f64 tensor as a matrix.
    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        let (r, c) = self.matrix_shape()?;
        match &self.data {
            TensorData::F64(v) => Ok(Array2::from_shape_vec((r, c), v.clone()).expect("checked")),
            TensorData::U8(_) => Err(dim_mismatch("expected an f64 tensor, found u8")),
        }
    }

    /// Interprets a 2-D u8 tensor as a boolean mask (non-zero is true).
    pub fn to_mask(&self) -> Result<Array2<bool>> {
        let (r, c) = self.matrix_shape()?;
        match &self.data {
            TensorData::U8(v) => {
                Ok(Array2::from_shape_vec((r, c), v.iter().map(|&b| b != 0).collect()).expect("checked"))
            }
            TensorData::F64(_) => Err(dim_mismatch("expected a u8 tensor, found f64")),
        }
    }

    fn matrix_shape(&self) -> Result<(usize, usize)> {
        match self.dims.as_slice() {
            &[r, c] => Ok((r as usize, c as usize)),
            dims => Err(dim_mismatch(format!("expected a 2-D tensor, found dims {dims:?}"))),
        }
    }
}

fn element_count(dims: &[u64]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| usize::try_from(d).ok().and_then(|d| acc.checked_mul(d)))
        .ok_or_else(|| dim_mismatch(format!("dims {dims:?} overflow")))
}

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(10 + 8 * t.dims.len() + 8 * t.data.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(t.dtype_code());
    buf.push(t.dims.len() as u8);
    for d in &t.dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    match &t.data {
        TensorData::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        TensorData::U8(v) => buf.extend_from_slice(v),
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let rest = self.bytes.len() - self.pos;
        if rest < n {
            return Err(Error::LengthMismatch { expected: self.pos + n, actual: self.bytes.len() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    let magic: [u8; 4] = cur.take(4)?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = cur.take(1)?[0];
    let width = match dtype {
        DTYPE_F64 => 8,
        DTYPE_U8 => 1,
        other => return Err(Error::UnsupportedDtype(other)),
    };
    let ndim = cur.take(1)?[0] as usize;
    let dims: Vec<u64> = (0..ndim)
        .map(|_| cur.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes"))))
        .collect::<Result<_>>()?;

    let count = element_count(&dims)?;
    let expected = count.checked_mul(width).ok_or_else(|| dim_mismatch("payload size overflows"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() != expected {
        return Err(Error::LengthMismatch { expected, actual: payload.len() });
    }
    let data = match dtype {
        DTYPE_F64 => TensorData::F64(
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
        ),
        _ => TensorData::U8(payload.to_vec()),
    };
    Ok(Tensor { dims, data })
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(fs::File::open(path)?)
}
