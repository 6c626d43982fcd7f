use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            _ => Err(Error::Config(format!("unknown optimizer {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Outer-loop optimizer. Adam keeps per-parameter moments keyed by name.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    steps: HashMap<String, u64>,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            steps: HashMap::new(),
            moments: HashMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, name: &str, grad: &Tensor) -> Result<()> {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Config(format!("optimizer: missing parameter {name}")))?;
        if p.shape() != grad.shape() {
            return Err(Error::shape("optimizer", p.shape(), grad.shape()));
        }
        if self.lr == 0.0 {
            return Ok(());
        }
        let x = p.data();
        let g = grad.data();
        let next: Vec<f64> = match self.kind {
            OptimizerKind::Sgd => x.iter().zip(g).map(|(a, b)| a - self.lr * b).collect(),
            OptimizerKind::Adam => {
                let t = self.steps.entry(name.to_string()).or_insert(0);
                *t += 1;
                let t = *t as i32;
                let (m, v) = self
                    .moments
                    .entry(name.to_string())
                    .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
                let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
                x.iter()
                    .zip(g)
                    .enumerate()
                    .map(|(i, (a, b))| {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * b;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * b * b;
                        a - self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS)
                    })
                    .collect()
            }
        };
        let t = Tensor::new(p.shape(), next, p.dtype())?;
        if !t.all_finite() {
            return Err(Error::Numeric { op: "optimizer step" });
        }
        params.set(name, t)
    }
}

/// Scales all gradients by `max / ‖g‖` when the global norm exceeds `max`.
pub fn clip_global_norm(grads: &mut [Tensor], max: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max {
        let s = max / norm;
        for g in grads.iter_mut() {
            *g = g.map(|v| v * s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DType;

    #[test]
    fn sgd_and_zero_lr() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(&[2], vec![1.0, 2.0], DType::F64).unwrap(), true).unwrap();
        let g = Tensor::new(&[2], vec![0.5, -1.0], DType::F64).unwrap();
        Optimizer::new(OptimizerKind::Sgd, 0.0).step(&mut p, "w", &g).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.0, 2.0]);
        Optimizer::new(OptimizerKind::Sgd, 0.1).step(&mut p, "w", &g).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[0.95, 2.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(&[2], vec![0.0, 0.0], DType::F64).unwrap(), true).unwrap();
        let g = Tensor::new(&[2], vec![3.0, -0.01], DType::F64).unwrap();
        Optimizer::new(OptimizerKind::Adam, 0.01).step(&mut p, "w", &g).unwrap();
        for (v, s) in p.get("w").unwrap().data().iter().zip([-1.0, 1.0]) {
            assert!((v - s * 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut g = vec![
            Tensor::new(&[1], vec![30.0], DType::F64).unwrap(),
            Tensor::new(&[1], vec![40.0], DType::F64).unwrap(),
        ];
        assert_eq!(clip_global_norm(&mut g, 10.0), 50.0);
        assert!((g[0].data()[0] - 6.0).abs() < 1e-12 && (g[1].data()[0] - 8.0).abs() < 1e-12);
    }
}
