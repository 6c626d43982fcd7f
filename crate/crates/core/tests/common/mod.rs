//! Test-only oracles: central finite differences and an op catalog.
#![allow(dead_code)]

pub mod fixtures;
pub mod metagrad;

use std::rc::Rc;

use epift_core::{grad, DType, GradOptions, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], dtype: DType) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            // Box-Muller, kept local so the oracle shares nothing with the crate.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Tensor::new(shape, data, dtype).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64, dtype: DType) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect(), dtype).unwrap()
}

fn perturbed(t: &Tensor, i: usize, delta: f64) -> Tensor {
    let mut d = t.data().to_vec();
    d[i] += delta;
    Tensor::new(t.shape(), d, DType::F64).unwrap()
}

/// Central-difference gradient of a scalar function of several tensors,
/// evaluated entirely in 64-bit.
pub fn numeric_grad<F>(f: &F, inputs: &[Tensor], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Var]) -> Result<Var> + ?Sized,
{
    let inputs: Vec<Tensor> = inputs.iter().map(|t| t.to_dtype(DType::F64)).collect();
    let eval = |ts: &[Tensor]| -> f64 {
        let vars: Vec<Var> = ts.iter().cloned().map(Var::constant).collect();
        f(&vars).unwrap().value().item()
    };
    let mut out = Vec::new();
    for k in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[k].len());
        for i in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k] = perturbed(&inputs[k], i, h);
            let mut minus = inputs.clone();
            minus[k] = perturbed(&inputs[k], i, -h);
            g.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

pub fn analytic_grad<F>(f: &F, inputs: &[Tensor]) -> Vec<Vec<f64>>
where
    F: Fn(&[Var]) -> Result<Var> + ?Sized,
{
    let vars: Vec<Var> = inputs.iter().cloned().map(Var::leaf).collect();
    let y = f(&vars).unwrap();
    let g = grad(&y, &vars, GradOptions::default()).unwrap();
    g.grads.iter().map(|v| v.value().data().to_vec()).collect()
}

/// `max|a - n| / max(max|a|, max|n|)`, with a tiny floor on the denominator.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    let num = a.iter().zip(n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = a
        .iter()
        .chain(n)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    num / den
}

pub fn max_rel_err(a: &[Vec<f64>], n: &[Vec<f64>]) -> f64 {
    a.iter().zip(n).map(|(x, y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Projects an arbitrary-shape output onto a fixed random direction so every
/// op can be checked through a scalar.
pub fn project(y: &Var, seed: u64) -> Result<Var> {
    let mut r = rng(seed ^ 0x5eed);
    let w = randn(&mut r, y.shape(), DType::F64);
    y.mul(&Var::constant(w))?.sum_all()
}

pub type OpFn = Rc<dyn Fn(&[Var]) -> Result<Var>>;

/// One entry of the op catalog: a name, an input generator and the op.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Rc<dyn Fn(&mut ChaCha8Rng, DType) -> Vec<Tensor>>,
    pub f: OpFn,
}

fn case(
    name: &'static str,
    inputs: impl Fn(&mut ChaCha8Rng, DType) -> Vec<Tensor> + 'static,
    f: impl Fn(&[Var]) -> Result<Var> + 'static,
) -> OpCase {
    OpCase {
        name,
        inputs: Rc::new(inputs),
        f: Rc::new(f),
    }
}

/// Every elementary op, each wrapped to a scalar via [`project`].
pub fn op_catalog() -> Vec<OpCase> {
    vec![
        case(
            "add_broadcast",
            |r, d| vec![randn(r, &[3, 4], d), randn(r, &[1, 4], d)],
            |x| project(&x[0].add(&x[1])?, 1),
        ),
        case(
            "sub_broadcast",
            |r, d| vec![randn(r, &[2, 3, 1], d), randn(r, &[3, 5], d)],
            |x| project(&x[0].sub(&x[1])?, 2),
        ),
        case(
            "mul_broadcast",
            |r, d| vec![randn(r, &[4, 3], d), randn(r, &[3], d)],
            |x| project(&x[0].mul(&x[1])?, 3),
        ),
        case(
            "div",
            |r, d| vec![randn(r, &[3, 3], d), uniform(r, &[3, 3], 0.5, 2.0, d)],
            |x| project(&x[0].div(&x[1])?, 4),
        ),
        case("neg", |r, d| vec![randn(r, &[5], d)], |x| project(&x[0].neg()?, 5)),
        case("scale", |r, d| vec![randn(r, &[5], d)], |x| project(&x[0].scale(-1.7)?, 6)),
        case(
            "add_scalar",
            |r, d| vec![randn(r, &[5], d)],
            |x| project(&x[0].add_scalar(0.3)?, 7),
        ),
        case("exp", |r, d| vec![randn(r, &[2, 3], d)], |x| project(&x[0].exp()?, 8)),
        case(
            "log",
            |r, d| vec![uniform(r, &[2, 3], 0.5, 3.0, d)],
            |x| project(&x[0].log()?, 9),
        ),
        case("relu", |r, d| vec![randn(r, &[3, 4], d)], |x| project(&x[0].relu()?, 10)),
        case(
            "powf",
            |r, d| vec![uniform(r, &[4], 0.5, 2.0, d)],
            |x| project(&x[0].powf(-0.5)?, 11),
        ),
        case(
            "clamp_min",
            |r, d| vec![randn(r, &[6], d)],
            |x| project(&x[0].clamp_min(0.1)?, 12),
        ),
        case(
            "matmul",
            |r, d| vec![randn(r, &[3, 4], d), randn(r, &[4, 2], d)],
            |x| project(&x[0].matmul(&x[1])?, 13),
        ),
        case(
            "sum_axis",
            |r, d| vec![randn(r, &[3, 4, 2], d)],
            |x| project(&x[0].sum_axis(1, false)?, 14),
        ),
        case(
            "mean_all",
            |r, d| vec![randn(r, &[3, 4], d)],
            |x| x[0].square()?.mean_all(),
        ),
        case(
            "broadcast_to",
            |r, d| vec![randn(r, &[3, 1], d)],
            |x| project(&x[0].broadcast_to(&[2, 3, 4])?, 15),
        ),
        case(
            "reshape_permute",
            |r, d| vec![randn(r, &[2, 3, 4], d)],
            |x| project(&x[0].permute(&[2, 0, 1])?.reshape(&[4, 6])?, 16),
        ),
        case(
            "index_select",
            |r, d| vec![randn(r, &[4, 3], d)],
            |x| project(&x[0].index_select(&[2, 0, 2])?, 17),
        ),
        case(
            "scatter_add",
            |r, d| vec![randn(r, &[4], d)],
            |x| project(&x[0].scatter_add(Rc::new(vec![1, 0, 1, 3]), &[2, 2])?, 18),
        ),
        case(
            "conv2d_valid",
            |r, d| vec![randn(r, &[2, 2, 5, 5], d), randn(r, &[3, 2, 3, 3], d)],
            |x| project(&x[0].conv2d(&x[1], 0)?, 19),
        ),
        case(
            "conv2d_same",
            |r, d| vec![randn(r, &[2, 1, 4, 6], d), randn(r, &[2, 1, 3, 3], d)],
            |x| project(&x[0].conv2d(&x[1], 1)?, 20),
        ),
        case(
            "max_pool2d",
            |r, d| vec![randn(r, &[2, 2, 4, 5], d)],
            |x| project(&x[0].max_pool2d(2)?, 21),
        ),
        case(
            "softmax",
            |r, d| vec![randn(r, &[3, 4], d)],
            |x| project(&x[0].softmax(1)?, 22),
        ),
        case(
            "log_softmax",
            |r, d| vec![randn(r, &[3, 4], d)],
            |x| project(&x[0].log_softmax(0)?, 23),
        ),
        case(
            "batch_norm",
            |r, d| {
                vec![
                    randn(r, &[3, 2, 2, 3], d),
                    uniform(r, &[2], 0.5, 1.5, d),
                    randn(r, &[2], d),
                ]
            },
            |x| project(&x[0].batch_norm(&x[1], &x[2], 1e-5)?, 24),
        ),
        case(
            "sq_euclidean",
            |r, d| vec![randn(r, &[3, 4], d), randn(r, &[2, 4], d)],
            |x| project(&x[0].sq_euclidean(&x[1])?, 25),
        ),
        case(
            "cosine_similarity",
            |r, d| vec![randn(r, &[3, 4], d), randn(r, &[2, 4], d)],
            |x| project(&x[0].cosine_similarity(&x[1])?, 26),
        ),
        case(
            "cross_entropy",
            |r, d| vec![randn(r, &[4, 3], d)],
            |x| x[0].cross_entropy(&[0, 2, 1, 2]),
        ),
        case(
            "linear",
            |r, d| vec![randn(r, &[3, 4], d), randn(r, &[2, 4], d), randn(r, &[2], d)],
            |x| project(&x[0].linear(&x[1], Some(&x[2]))?, 27),
        ),
    ]
}
