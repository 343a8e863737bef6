//! Dense NCHW tensors of `f32` and the `TNSR` dump format.
//!
//! The dump layout is: the four magic bytes `TNSR`, a little-endian `u32`
//! version (currently 1), four little-endian `u32` dimensions `(n, c, h, w)`,
//! then `n * c * h * w` little-endian `f32` values in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TNSR_MAGIC: &[u8; 4] = b"TNSR";
pub const TNSR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor from external data, rejecting length mismatches and non-finite values.
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::config(format!(
                "tensor data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "tensor element {i} is not finite ({})",
                data[i]
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// The `h * w` slice for batch item `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Copies out batch item `n` as a tensor with `n = 1`.
    pub fn item(&self, n: usize) -> Tensor {
        let per = self.shape.c * self.shape.plane();
        Tensor {
            shape: Shape { n: 1, ..self.shape },
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Stacks single-or-multi item tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::config("cannot stack an empty tensor list"))?;
        let mut n = 0;
        let mut data = Vec::new();
        for t in items {
            let s = t.shape;
            if (s.c, s.h, s.w) != (first.shape.c, first.shape.h, first.shape.w) {
                return Err(Error::config(format!(
                    "cannot stack {s} with {}",
                    first.shape
                )));
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape { n, ..first.shape },
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; panics if shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn write_tnsr<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(TNSR_MAGIC)?;
        out.write_all(&TNSR_VERSION.to_le_bytes())?;
        for d in self.shape.dims() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn to_tnsr_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + 4 * self.data.len());
        self.write_tnsr(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_tnsr_bytes(bytes: &[u8]) -> Result<Tensor> {
        if bytes.len() < 24 {
            return Err(Error::format(format!(
                "TNSR header truncated: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[0..4] != TNSR_MAGIC {
            return Err(Error::format("bad TNSR magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != TNSR_VERSION {
            return Err(Error::format(format!("unsupported TNSR version {version}")));
        }
        let shape = Shape::new(
            word(8) as usize,
            word(12) as usize,
            word(16) as usize,
            word(20) as usize,
        );
        let payload = &bytes[24..];
        if payload.len() != shape.len() * 4 {
            return Err(Error::format(format!(
                "TNSR payload is {} bytes, shape {shape} needs {}",
                payload.len(),
                shape.len() * 4
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }

    pub fn read_tnsr<R: Read>(mut input: R) -> Result<Tensor> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<reader>", e))?;
        Tensor::from_tnsr_bytes(&bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_tnsr_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tnsr_bytes()).map_err(|e| Error::io(path, e))
    }
}
