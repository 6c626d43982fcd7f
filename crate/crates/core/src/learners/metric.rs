use super::Distance;
use crate::error::{Error, Result};
use crate::tensor::Var;

/// Class means of class-major support embeddings `(way·shot, …)`, shape
/// `(way, …)`.
pub fn pn_prototypes(support: &Var, way: usize, shot: usize) -> Result<Var> {
    let s = support.shape();
    if s.is_empty() || s[0] != way * shot || shot == 0 {
        return Err(Error::shape("pn_prototypes", s, &[way, shot]));
    }
    let mut grouped = vec![way, shot];
    grouped.extend_from_slice(&s[1..]);
    support.reshape(&grouped)?.mean_axis(1, false)
}

/// Negative distances `(queries × way)` between flat query embeddings and
/// prototypes (maps are flattened first).
pub fn pn_logits(query: &Var, prototypes: &Var, distance: Distance) -> Result<Var> {
    let q = query.flatten_from(1)?;
    let p = prototypes.flatten_from(1)?;
    let d = q.sq_euclidean(&p)?;
    match distance {
        Distance::SquaredEuclidean => d.neg(),
        // Floor keeps the gradient finite at zero distance.
        Distance::Euclidean => d.clamp_min(1e-12)?.sqrt()?.neg(),
    }
}

pub fn pn_classify(query: &Var, prototypes: &Var, distance: Distance) -> Result<Var> {
    pn_logits(query, prototypes, distance)?.softmax(1)
}

/// Class distributions `(queries × way)`: a softmax over support samples
/// of negative cosine distance, summed per class.
pub fn mn_classify(query: &Var, support: &Var, way: usize, shot: usize) -> Result<Var> {
    let s = support.flatten_from(1)?;
    if s.shape()[0] != way * shot || shot == 0 {
        return Err(Error::shape("mn_classify", support.shape(), &[way, shot]));
    }
    let q = query.flatten_from(1)?;
    // Softmax is shift invariant, so softmax(cos − 1) = softmax(cos).
    let attn = q.cosine_similarity(&s)?.softmax(1)?;
    let n = q.shape()[0];
    attn.reshape(&[n, way, shot])?.sum_axis(2, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DType, Tensor};

    fn v(shape: &[usize], data: Vec<f64>) -> Var {
        Var::constant(Tensor::new(shape, data, DType::F64).unwrap())
    }

    #[test]
    fn prototype_of_two_points_is_midpoint() {
        let s = v(&[2, 2], vec![0.0, 0.0, 2.0, 2.0]);
        assert_eq!(pn_prototypes(&s, 1, 2).unwrap().value().data(), &[1.0, 1.0]);
    }

    #[test]
    fn equidistant_prototypes_split_evenly() {
        let p = v(&[2, 2], vec![1.0, 0.0, -1.0, 0.0]);
        let q = v(&[1, 2], vec![0.0, 3.0]);
        for d in [Distance::SquaredEuclidean, Distance::Euclidean] {
            let probs = pn_classify(&q, &p, d).unwrap();
            for &x in probs.value().data() {
                assert!((x - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_support_gives_uniform_matching() {
        let s = v(&[6, 2], [1.0, 2.0].repeat(6));
        let q = v(&[2, 2], vec![0.3, -1.0, 5.0, 5.0]);
        let p = mn_classify(&q, &s, 3, 2).unwrap();
        for &x in p.value().data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let s = v(&[5, 2], vec![0.0; 10]);
        assert!(pn_prototypes(&s, 2, 2).is_err());
    }
}
