use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Named learnable tensors in declaration order.
///
/// Iteration order is insertion order and is part of the checkpoint
/// contract. Cloning yields an independent set: tensors are immutable, and
/// updates always build a new set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if name.chars().any(char::is_whitespace) || name.is_empty() {
            return Err(Error::Config(format!("invalid parameter name {name:?}")));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.entries.insert(name, Param { tensor, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|p| &p.tensor)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    /// Replaces the tensor of an existing entry; the shape must not change.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        if p.tensor.shape() != tensor.shape() {
            return Err(Error::shape("param_set", p.tensor.shape(), tensor.shape()));
        }
        p.tensor = tensor;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.tensor.len()).sum()
    }

    pub fn to_dtype(&self, dtype: DType) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            tensor: p.tensor.to_dtype(dtype),
                            trainable: p.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Graph inputs for a forward pass: trainable entries become leaves when
    /// `track` is set, everything else constants.
    pub fn bind(&self, track: bool) -> Bound {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|(k, p)| {
                    let v = if track && p.trainable {
                        Var::leaf(p.tensor.clone())
                    } else {
                        Var::constant(p.tensor.clone())
                    };
                    (k.clone(), v)
                })
                .collect(),
        }
    }

    /// SHA-256 over names and tensor contents in order.
    pub fn checksum(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (k, p) in &self.entries {
            h.update(k.as_bytes());
            h.update([p.trainable as u8]);
            p.tensor.feed(&mut h);
        }
        h.finalize().into()
    }

    /// Checks that `other` declares the same names and shapes in order.
    pub fn check_layout(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((ka, a), (kb, b)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return Err(Error::Config(format!("parameter name mismatch: {ka} vs {kb}")));
            }
            if a.tensor.shape() != b.tensor.shape() {
                return Err(Error::Config(format!(
                    "parameter {ka}: shape {:?} vs {:?}",
                    a.tensor.shape(),
                    b.tensor.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Parameters bound into a graph, keyed by name.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<&Var> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, var: Var) {
        self.vars.insert(name.into(), var);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Current values as a parameter set, keeping `template`'s flags.
    pub fn snapshot(&self, template: &ParamSet) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (name, p) in template.iter() {
            out.insert(name, self.get(name)?.value().clone(), p.trainable)?;
        }
        Ok(out)
    }
}

/// Normal(0, σ) resampled until within ±2σ.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64, dtype: DType) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect();
    Tensor::new(shape, data, dtype).expect("shape matches data")
}
