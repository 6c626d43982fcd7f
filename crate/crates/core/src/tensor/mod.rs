//! Dense tensors and reverse-mode automatic differentiation.
//!
//! Values are stored as `f64` regardless of [`DType`]. A tensor tagged
//! [`DType::F32`] has every element rounded to the nearest `f32` after each
//! operation, so it carries exactly the values a 32-bit implementation would
//! hold while sharing one code path with the 64-bit verification mode.

mod autograd;
mod functional;
pub(crate) mod kernels;

pub use autograd::{grad, GradOptions, Gradients, Var};
pub use functional::{argmax_rows, NORM_FLOOR};

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Numeric width of a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum DType {
    #[default]
    F32,
    F64,
}

impl DType {
    /// Width resulting from combining two operands; 64-bit wins.
    pub fn promote(self, other: DType) -> DType {
        if self == DType::F64 || other == DType::F64 {
            DType::F64
        } else {
            DType::F32
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    pub fn from_name(name: &str) -> Option<DType> {
        match name {
            "f32" => Some(DType::F32),
            "f64" => Some(DType::F64),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major n-dimensional array with shape metadata.
///
/// The backing buffer is reference counted, so cloning is cheap and clones
/// never observe each other's mutations (there are none: tensors are
/// immutable once built).
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    dtype: DType,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &self.dtype)
            .field("data", &preview)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Builds a tensor, rounding values to the requested width.
    pub fn new(shape: &[usize], data: Vec<f64>, dtype: DType) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(Error::shape("tensor", shape, &[data.len()]));
        }
        Ok(Tensor::from_raw(shape.to_vec(), data, dtype))
    }

    pub(crate) fn from_raw(shape: Vec<usize>, mut data: Vec<f64>, dtype: DType) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        if dtype == DType::F32 {
            for v in data.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        Tensor {
            shape,
            data: Arc::new(data),
            dtype,
        }
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Result<Tensor> {
        Tensor::new(shape, data.iter().map(|&v| v as f64).collect(), DType::F32)
    }

    pub fn zeros(shape: &[usize], dtype: DType) -> Tensor {
        Tensor::full(shape, 0.0, dtype)
    }

    pub fn ones(shape: &[usize], dtype: DType) -> Tensor {
        Tensor::full(shape, 1.0, dtype)
    }

    pub fn full(shape: &[usize], value: f64, dtype: DType) -> Tensor {
        Tensor::from_raw(shape.to_vec(), vec![value; numel(shape)], dtype)
    }

    pub fn scalar(value: f64, dtype: DType) -> Tensor {
        Tensor::from_raw(vec![], vec![value], dtype)
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize, dtype: DType) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::from_raw(vec![n, n], data, dtype)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn to_dtype(&self, dtype: DType) -> Tensor {
        if dtype == self.dtype {
            return self.clone();
        }
        Tensor::from_raw(self.shape.clone(), self.data.to_vec(), dtype)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
            dtype: self.dtype,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_raw(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
            self.dtype,
        )
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn all_finite(&self) -> bool {
        // Branch-free so the scan vectorizes: a value is non-finite iff all
        // exponent bits are set.
        const EXP: u64 = 0x7ff0_0000_0000_0000;
        self.data
            .iter()
            .fold(0u64, |bad, v| bad | ((v.to_bits() & EXP) == EXP) as u64)
            == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Data("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        let mut dtype = first.dtype;
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &t.shape));
            }
            dtype = dtype.promote(t.dtype);
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor::from_raw(shape, data, dtype))
    }

    /// Little-endian bytes at the tensor's own width.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * self.dtype.byte_width());
        match self.dtype {
            DType::F32 => {
                for &v in self.data.iter() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            DType::F64 => {
                for &v in self.data.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_le_bytes(shape: &[usize], dtype: DType, bytes: &[u8]) -> Result<Tensor> {
        let width = dtype.byte_width();
        if bytes.len() != numel(shape) * width {
            return Err(Error::Data(format!(
                "expected {} bytes for shape {:?} {}, found {}",
                numel(shape) * width,
                shape,
                dtype,
                bytes.len()
            )));
        }
        let data = match dtype {
            DType::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            DType::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
        };
        Tensor::new(shape, data, dtype)
    }

    /// SHA-256 over shape, width and raw bytes.
    pub fn checksum(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        self.feed(&mut h);
        h.finalize().into()
    }

    pub(crate) fn feed(&self, h: &mut Sha256) {
        for &d in &self.shape {
            h.update((d as u64).to_le_bytes());
        }
        h.update(self.dtype.name().as_bytes());
        h.update(self.to_le_bytes());
    }
}
