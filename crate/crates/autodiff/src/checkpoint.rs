//! Versioned binary checkpoint container.
//!
//! Layout (little-endian): magic `ENSCKPT\0`, `u32` version, `u64` metadata
//! length + UTF-8 metadata (JSON by convention), `u32` counter count followed
//! by `(u16 name len, name, u64 value)`, `u32` tensor count followed by
//! `(u16 name len, name, u8 dtype, u64 rows, u64 cols, payload)`.
//! Entries keep insertion order so identical content gives identical bytes.

use std::path::Path;

use crate::adam::Adam;
use crate::error::{AutodiffError, Result};
use crate::nn::{Activation, Linear, Mlp};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ENSCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
struct RawTensor {
    name: String,
    dtype: u8,
    rows: usize,
    cols: usize,
    bytes: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    counters: Vec<(String, u64)>,
    tensors: Vec<RawTensor>,
}

fn err(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(err(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| err("invalid utf-8"))
    }
}

impl Checkpoint {
    pub fn new(meta: impl Into<String>) -> Self {
        Self {
            meta: meta.into(),
            ..Default::default()
        }
    }

    pub fn put_counter(&mut self, name: &str, value: u64) {
        self.counters.retain(|(n, _)| n != name);
        self.counters.push((name.to_string(), value));
    }

    pub fn counter(&self, name: &str) -> Result<u64> {
        self.counters
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| err(format!("missing counter {name}")))
    }

    pub fn put_tensor<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) {
        let mut bytes = Vec::with_capacity(t.len() * T::BYTES);
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
        self.tensors.retain(|r| r.name != name);
        self.tensors.push(RawTensor {
            name: name.to_string(),
            dtype: T::DTYPE,
            rows: t.rows(),
            cols: t.cols(),
            bytes,
        });
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.tensors.iter().any(|r| r.name == name)
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let raw = self
            .tensors
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| err(format!("missing tensor {name}")))?;
        if raw.dtype != T::DTYPE {
            return Err(err(format!("tensor {name} has dtype {} but {} was requested", raw.dtype, T::DTYPE)));
        }
        let data = raw.bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
        Tensor::new(raw.rows, raw.cols, data)
    }

    pub fn put_mlp<T: Scalar>(&mut self, prefix: &str, mlp: &Mlp<T>) {
        self.put_counter(&format!("{prefix}.layers"), mlp.layers.len() as u64);
        self.put_counter(
            &format!("{prefix}.activation"),
            match mlp.activation {
                Activation::Relu => 0,
                Activation::Softplus => 1,
            },
        );
        for (i, l) in mlp.layers.iter().enumerate() {
            self.put_tensor(&format!("{prefix}.{i}.weight"), &l.weight);
            self.put_tensor(&format!("{prefix}.{i}.bias"), &l.bias);
        }
    }

    pub fn mlp<T: Scalar>(&self, prefix: &str) -> Result<Mlp<T>> {
        let n = self.counter(&format!("{prefix}.layers"))? as usize;
        let activation = match self.counter(&format!("{prefix}.activation"))? {
            0 => Activation::Relu,
            1 => Activation::Softplus,
            other => return Err(err(format!("unknown activation tag {other}"))),
        };
        let layers = (0..n)
            .map(|i| {
                Ok(Linear {
                    weight: self.tensor(&format!("{prefix}.{i}.weight"))?,
                    bias: self.tensor(&format!("{prefix}.{i}.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers, activation)
    }

    pub fn put_adam<T: Scalar>(&mut self, prefix: &str, adam: &Adam<T>) {
        self.put_counter(&format!("{prefix}.step"), adam.step);
        self.put_counter(&format!("{prefix}.slots"), adam.first.len() as u64);
        self.put_counter(&format!("{prefix}.lr_bits"), adam.lr.to_bits());
        for (i, (m, v)) in adam.first.iter().zip(&adam.second).enumerate() {
            self.put_tensor(&format!("{prefix}.m{i}"), m);
            self.put_tensor(&format!("{prefix}.v{i}"), v);
        }
    }

    pub fn adam<T: Scalar>(&self, prefix: &str) -> Result<Adam<T>> {
        let slots = self.counter(&format!("{prefix}.slots"))? as usize;
        let lr = f64::from_bits(self.counter(&format!("{prefix}.lr_bits"))?);
        let mut adam = Adam::new(lr, &[]);
        adam.step = self.counter(&format!("{prefix}.step"))?;
        for i in 0..slots {
            adam.first.push(self.tensor(&format!("{prefix}.m{i}"))?);
            adam.second.push(self.tensor(&format!("{prefix}.v{i}"))?);
        }
        Ok(adam)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&(self.counters.len() as u32).to_le_bytes());
        for (name, v) in &self.counters {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype);
            out.extend_from_slice(&(t.rows as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols as u64).to_le_bytes());
            out.extend_from_slice(&t.bytes);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(err("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let meta = r.string(meta_len)?;
        let mut ckpt = Checkpoint::new(meta);
        for _ in 0..r.u32()? {
            let n = r.u16()? as usize;
            let name = r.string(n)?;
            let v = r.u64()?;
            ckpt.counters.push((name, v));
        }
        for _ in 0..r.u32()? {
            let n = r.u16()? as usize;
            let name = r.string(n)?;
            let dtype = r.u8()?;
            let width = match dtype {
                1 => 4,
                2 => 8,
                other => return Err(err(format!("unknown dtype {other} for {name}"))),
            };
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let bytes = r.take(rows * cols * width)?.to_vec();
            ckpt.tensors.push(RawTensor {
                name,
                dtype,
                rows,
                cols,
                bytes,
            });
        }
        if r.pos != buf.len() {
            return Err(err("trailing bytes"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
