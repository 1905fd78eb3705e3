//! Binary parameter files.
//!
//! Layout, all integers little-endian: the magic bytes, a `u32` count of
//! header entries each stored as two length-prefixed UTF-8 strings, then a
//! `u32` tensor count, and per tensor a length-prefixed name, a `u32` rank,
//! `u64` dimensions and the values as `f64`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CGPTCKP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<NamedArray>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn capture<T: Scalar>(header: Vec<(String, String)>, model: &impl Parameters<T>) -> Self {
        let tensors = model
            .named_parameters()
            .into_iter()
            .map(|(name, t)| NamedArray {
                name,
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect();
        Self { header, tensors }
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Copies every stored tensor into the same-named parameter of `model`.
    /// Names and shapes must match exactly.
    pub fn restore<T: Scalar>(&self, model: &mut impl Parameters<T>) -> Result<()> {
        let mut params = model.named_parameters_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for (name, slot) in params.iter_mut() {
            let stored = self
                .tensors
                .iter()
                .find(|a| a.name == *name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if stored.shape != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: stored shape {:?}, model shape {:?}",
                    stored.shape,
                    slot.shape()
                )));
            }
            **slot = Tensor::parameter(
                stored.values.iter().map(|&v| T::of(v)).collect(),
                &stored.shape,
            )?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, self.header.len());
        for (k, v) in &self.header {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.tensors.len());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            put_u32(&mut out, t.shape.len());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let n_header = get_u32(&mut r)?;
        let mut header = Vec::new();
        for _ in 0..n_header {
            header.push((get_str(&mut r)?, get_str(&mut r)?));
        }
        let n_tensors = get_u32(&mut r)?;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = get_str(&mut r)?;
            let rank = get_u32(&mut r)?;
            let shape = (0..rank)
                .map(|_| get_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n.saturating_mul(8) > r.len() {
                return Err(Error::Checkpoint(format!("{name}: truncated values")));
            }
            let values = (0..n).map(|_| get_f64(&mut r)).collect::<Result<_>>()?;
            tensors.push(NamedArray {
                name,
                shape,
                values,
            });
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn truncated(_: io::Error) -> Error {
    Error::Checkpoint("unexpected end of file".into())
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn get_u32(r: &mut &[u8]) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str(r: &mut &[u8]) -> Result<String> {
    let n = get_u32(r)?;
    if n > r.len() {
        return Err(Error::Checkpoint("unexpected end of file".into()));
    }
    let (s, rest) = r.split_at(n);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
}
