use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, ParamSet};
use crate::tensor::{Tensor, Var};

pub const PREFIX: &str = "curvature/";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMode {
    /// Elementwise scale per parameter value.
    Diagonal,
    /// One square matrix per tensor mode, applied as mode products.
    Factored,
}

impl CurvatureMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "factored" => Ok(Self::Factored),
            _ => Err(Error::Config(format!("unknown curvature mode {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Diagonal => "diagonal",
            Self::Factored => "factored",
        }
    }
}

/// Learnable gradient transforms for the adapted parameters.
///
/// Diagonal entries are named `curvature/<param>`; factored entries
/// `curvature/<param>/mode<d>` for each axis `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSet {
    mode: CurvatureMode,
    targets: Vec<(String, Vec<usize>)>,
    params: ParamSet,
}

fn diag_name(target: &str) -> String {
    format!("{PREFIX}{target}")
}

fn mode_name(target: &str, d: usize) -> String {
    format!("{PREFIX}{target}/mode{d}")
}

impl CurvatureSet {
    /// Identity transforms for the listed parameters of `theta`.
    pub fn identity(mode: CurvatureMode, theta: &ParamSet, targets: &[String]) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut t = Vec::with_capacity(targets.len());
        for name in targets {
            let p = theta
                .get(name)
                .ok_or_else(|| Error::Config(format!("curvature target {name} is not a parameter")))?;
            let shape = p.shape().to_vec();
            match mode {
                CurvatureMode::Diagonal => params.insert(diag_name(name), Tensor::ones(&shape, p.dtype()), true)?,
                CurvatureMode::Factored if shape.is_empty() => {
                    params.insert(diag_name(name), Tensor::ones(&[], p.dtype()), true)?
                }
                CurvatureMode::Factored => {
                    for (d, &n) in shape.iter().enumerate() {
                        params.insert(mode_name(name, d), Tensor::eye(n, p.dtype()), true)?;
                    }
                }
            }
            t.push((name.clone(), shape));
        }
        Ok(Self {
            mode,
            targets: t,
            params,
        })
    }

    /// Rebuilds a set from stored tensors, checking them against the
    /// identity layout for `theta`.
    pub fn from_params(mode: CurvatureMode, theta: &ParamSet, targets: &[String], stored: ParamSet) -> Result<Self> {
        let mut s = Self::identity(mode, theta, targets)?;
        s.params.check_layout(&stored)?;
        s.params = stored;
        Ok(s)
    }

    pub fn mode(&self) -> CurvatureMode {
        self.mode
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.targets.iter().map(|(n, _)| n.as_str())
    }

    pub fn checksum(&self) -> [u8; 32] {
        self.params.checksum()
    }

    /// `M(grad)` for parameter `target`, using the curvature tensors bound
    /// in `bound` so the result is differentiable in them.
    pub fn apply(&self, bound: &Bound, target: &str, grad: &Var) -> Result<Var> {
        let (_, shape) = self
            .targets
            .iter()
            .find(|(n, _)| n == target)
            .ok_or_else(|| Error::Config(format!("no curvature for {target}")))?;
        if grad.shape() != shape.as_slice() {
            return Err(Error::shape("curvature", grad.shape(), shape));
        }
        if self.mode == CurvatureMode::Diagonal || shape.is_empty() {
            return grad.mul(bound.get(&diag_name(target))?);
        }
        let nd = shape.len();
        let mut g = grad.clone();
        for d in 0..nd {
            // Bring axis d to the front, multiply, and restore the order.
            let mut axes: Vec<usize> = vec![d];
            axes.extend((0..nd).filter(|&a| a != d));
            let moved = g.permute(&axes)?;
            let moved_shape = moved.shape().to_vec();
            let rest: usize = moved_shape[1..].iter().product();
            let prod = bound
                .get(&mode_name(target, d))?
                .matmul(&moved.reshape(&[shape[d], rest])?)?
                .reshape(&moved_shape)?;
            let mut inv = vec![0; nd];
            for (i, &a) in axes.iter().enumerate() {
                inv[a] = i;
            }
            g = prod.permute(&inv)?;
        }
        Ok(g)
    }
}
