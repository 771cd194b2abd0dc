//! Little-endian binary container shared by parameter and checkpoint files.
//!
//! Layout: 4-byte magic, `u32` version, caller-defined header scalars, `u32`
//! tensor count, then tensors. Each tensor is `u32` name length, name bytes, `u8`
//! precision tag, `u32` rank, `u64` dims and row-major data. Tag 1 stores f16
//! values followed by one f32 scale per leading-dimension row.

use std::path::Path;

use half::f16;

use crate::error::{Error, Result};

pub const TAG_F32: u8 = 0;
pub const TAG_F16_SCALED: u8 = 1;
pub const TAG_F64: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F16Scaled { data: Vec<f16>, scale: Vec<f32> },
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            dims,
            data: TensorData::F32(data),
        }
    }

    pub fn f64(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims,
            data: TensorData::F64(data),
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Values widened to f64; scaled tensors are dequantized.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::F16Scaled { data, scale } => {
                let cols = self.numel() / self.dims.first().copied().unwrap_or(1).max(1);
                data.iter()
                    .enumerate()
                    .map(|(i, x)| (scale[i / cols.max(1)] * x.to_f32()) as f64)
                    .collect()
            }
        }
    }
}

pub struct Writer {
    buf: Vec<u8>,
    tensors: Vec<u8>,
    count: u32,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&version.to_le_bytes());
        Self {
            buf,
            tensors: Vec::new(),
            count: 0,
        }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn tensor(&mut self, t: &Tensor) {
        let out = &mut self.tensors;
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        let tag = match t.data {
            TensorData::F32(_) => TAG_F32,
            TensorData::F16Scaled { .. } => TAG_F16_SCALED,
            TensorData::F64(_) => TAG_F64,
        };
        out.push(tag);
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &t.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F16Scaled { data, scale } => {
                data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                scale.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
        }
        self.count += 1;
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.buf.extend_from_slice(&self.count.to_le_bytes());
        self.buf.extend_from_slice(&self.tensors);
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.finish()).map_err(|e| Error::io(path, e))
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: String,
}

impl<'a> Reader<'a> {
    /// Checks the magic and returns the reader with the file version.
    pub fn new(bytes: &'a [u8], magic: &[u8; 4], what: impl Into<String>) -> Result<(Self, u32)> {
        let mut r = Self {
            bytes,
            pos: 0,
            what: what.into(),
        };
        let m = r.take(4, "magic")?;
        if m != magic {
            return Err(Error::load(
                r.what.clone(),
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(magic)),
            ));
        }
        let version = r.u32("version")?;
        Ok((r, version))
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::load(
                self.what.clone(),
                format!("truncated while reading {field} at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    /// Reads the tensor count and all tensors.
    pub fn tensors(mut self) -> Result<Vec<Tensor>> {
        let count = self.u32("tensor count")?;
        let mut out = Vec::with_capacity(count.min(4096) as usize);
        for i in 0..count {
            out.push(self.tensor(i)?);
        }
        if self.pos != self.bytes.len() {
            return Err(Error::load(
                self.what.clone(),
                format!("{} trailing bytes after last tensor", self.bytes.len() - self.pos),
            ));
        }
        Ok(out)
    }

    fn tensor(&mut self, index: u32) -> Result<Tensor> {
        let label = format!("tensor #{index}");
        let len = self.u32(&format!("{label} name length"))? as usize;
        let name = String::from_utf8(self.take(len, &format!("{label} name"))?.to_vec())
            .map_err(|_| Error::load(self.what.clone(), format!("{label} name is not UTF-8")))?;
        let tag = self.take(1, &format!("tensor '{name}' precision tag"))?[0];
        let rank = self.u32(&format!("tensor '{name}' rank"))? as usize;
        if rank > 8 {
            return Err(Error::load(name, format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u64(&format!("tensor '{name}' dims"))? as usize);
        }
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::load(name.clone(), "dimension product overflows"))?;
        let field = format!("tensor '{name}' data");
        let data = match tag {
            TAG_F32 => {
                let raw = self.take(numel.saturating_mul(4), &field)?;
                TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            TAG_F64 => {
                let raw = self.take(numel.saturating_mul(8), &field)?;
                TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            TAG_F16_SCALED => {
                let rows = dims.first().copied().unwrap_or(1);
                let raw = self.take(numel.saturating_mul(2), &field)?;
                let data = raw.chunks_exact(2).map(|c| f16::from_le_bytes(c.try_into().unwrap())).collect();
                let raw = self.take(rows.saturating_mul(4), &format!("tensor '{name}' scales"))?;
                let scale = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                TensorData::F16Scaled { data, scale }
            }
            other => return Err(Error::load(name, format!("unknown precision tag {other}"))),
        };
        Ok(Tensor { name, dims, data })
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let mut w = Writer::new(b"TEST", 3);
        w.u32(42);
        w.f64(1.5);
        w.tensor(&Tensor::f32("a", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        w.tensor(&Tensor::f64("b", vec![3], vec![0.1, 0.2, 0.3]));
        w.tensor(&Tensor {
            name: "c".into(),
            dims: vec![2, 1],
            data: TensorData::F16Scaled {
                data: vec![f16::from_f32(0.5), f16::from_f32(-1.0)],
                scale: vec![2.0, 4.0],
            },
        });
        w.finish()
    }

    #[test]
    fn roundtrip() {
        let bytes = sample();
        let (mut r, version) = Reader::new(&bytes, b"TEST", "sample").unwrap();
        assert_eq!(version, 3);
        assert_eq!(r.u32("x").unwrap(), 42);
        assert_eq!(r.f64("y").unwrap(), 1.5);
        let t = r.tensors().unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].to_f64(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t[1].to_f64(), vec![0.1, 0.2, 0.3]);
        assert_eq!(t[2].to_f64(), vec![1.0, -4.0]);
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = sample();
        for cut in 0..bytes.len() {
            let res = Reader::new(&bytes[..cut], b"TEST", "sample").and_then(|(mut r, _)| {
                r.u32("x")?;
                r.f64("y")?;
                r.tensors()
            });
            assert!(res.is_err(), "cut at {cut} accepted");
        }
    }

    #[test]
    fn wrong_magic() {
        let bytes = sample();
        assert!(Reader::new(&bytes, b"NOPE", "sample").is_err());
    }
}
