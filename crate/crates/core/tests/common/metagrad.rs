//! Finite-difference oracle for meta-gradients: the analytic gradient is
//! read back from one SGD step with β = 1 and compared against central
//! differences of the outer loss.

use epift_core::episodes::Episode;
use epift_core::metaopt::MetaLearner;
use epift_core::nn::ParamSet;
use epift_core::Tensor;

use super::rng;

pub fn flat(p: &ParamSet) -> Vec<f64> {
    p.iter().flat_map(|(_, t)| t.tensor.data().to_vec()).collect()
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    num / den
}

pub fn with_value(p: &ParamSet, k: usize, delta: f64) -> ParamSet {
    let mut out = p.clone();
    let mut seen = 0;
    let names: Vec<String> = p.names().map(str::to_string).collect();
    for n in names {
        let t = p.get(&n).unwrap();
        if k < seen + t.len() {
            let mut d = t.data().to_vec();
            d[k - seen] += delta;
            out.set(&n, Tensor::new(t.shape(), d, t.dtype()).unwrap()).unwrap();
            return out;
        }
        seen += t.len();
    }
    panic!("index {k} out of range");
}

/// Outer loss at the learner's current θ and M (β = 0 leaves them fixed).
pub fn outer_loss(ml: &MetaLearner, ep: &Episode) -> f64 {
    let mut m = ml.clone();
    m.cfg.beta = 0.0;
    let mut m = MetaLearner::new(m.model.clone(), m.cfg.clone(), m.theta.clone())
        .map(|mut fresh| {
            fresh.curvature = m.curvature.take();
            fresh
        })
        .unwrap();
    m.meta_step(ep, &mut rng(0)).unwrap().loss
}

/// Meta-gradient recovered from one SGD step with β = 1.
pub fn stepped_gradient(ml: &MetaLearner, ep: &Episode) -> (Vec<f64>, Vec<f64>) {
    let mut m = ml.clone();
    m.meta_step(ep, &mut rng(0)).unwrap();
    let gt = flat(&ml.theta).iter().zip(flat(&m.theta)).map(|(a, b)| a - b).collect();
    let gm = match (&ml.curvature, &m.curvature) {
        (Some(a), Some(b)) => flat(a.params()).iter().zip(flat(b.params())).map(|(x, y)| x - y).collect(),
        _ => Vec::new(),
    };
    (gt, gm)
}

pub fn fd_theta(ml: &MetaLearner, ep: &Episode, h: f64) -> Vec<f64> {
    (0..ml.theta.num_values())
        .map(|k| {
            let mut plus = ml.clone();
            plus.theta = with_value(&ml.theta, k, h);
            let mut minus = ml.clone();
            minus.theta = with_value(&ml.theta, k, -h);
            (outer_loss(&plus, ep) - outer_loss(&minus, ep)) / (2.0 * h)
        })
        .collect()
}

pub fn fd_curvature(ml: &MetaLearner, ep: &Episode, h: f64) -> Vec<f64> {
    let c = ml.curvature.as_ref().unwrap();
    (0..c.params().num_values())
        .map(|k| {
            let shifted = |d: f64| {
                let mut m = ml.clone();
                *m.curvature.as_mut().unwrap().params_mut() = with_value(c.params(), k, d);
                m
            };
            (outer_loss(&shifted(h), ep) - outer_loss(&shifted(-h), ep)) / (2.0 * h)
        })
        .collect()
}

