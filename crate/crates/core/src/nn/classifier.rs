use rand::Rng;

use super::backbone::INIT_STD;
use super::params::{truncated_normal, Bound, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor, Var};

pub const WEIGHT: &str = "global/weight";
pub const BIAS: &str = "global/bias";

/// Fully connected layer over all training classes.
pub fn init_global_classifier<R: Rng + ?Sized>(
    params: &mut ParamSet,
    embedding_len: usize,
    n_train_classes: usize,
    rng: &mut R,
    dtype: DType,
) -> Result<()> {
    if n_train_classes < 2 {
        return Err(Error::Config(format!(
            "global classifier needs at least 2 training classes, got {n_train_classes}"
        )));
    }
    params.insert(
        WEIGHT,
        truncated_normal(rng, &[n_train_classes, embedding_len], INIT_STD, dtype),
        true,
    )?;
    params.insert(BIAS, Tensor::zeros(&[n_train_classes], dtype), true)
}

/// Logits `(batch, n_train_classes)` for flat embeddings.
pub fn global_classifier(params: &Bound, embeddings: &Var, n_train_classes: usize) -> Result<Var> {
    let w = params.get(WEIGHT)?;
    if w.shape()[0] != n_train_classes {
        return Err(Error::Config(format!(
            "global classifier has {} classes, training split has {n_train_classes}",
            w.shape()[0]
        )));
    }
    if embeddings.shape().len() != 2 || embeddings.shape()[1] != w.shape()[1] {
        return Err(Error::shape("global_classifier", embeddings.shape(), w.shape()));
    }
    embeddings.linear(w, Some(params.get(BIAS)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let mut p = ParamSet::new();
        p.insert(WEIGHT, Tensor::zeros(&[4, 3], DType::F64), true).unwrap();
        p.insert(BIAS, Tensor::zeros(&[4], DType::F64), true).unwrap();
        let e = Var::constant(Tensor::new(&[1, 3], vec![0.5, -1.0, 2.0], DType::F64).unwrap());
        let logits = global_classifier(&p.bind(false), &e, 4).unwrap();
        assert_eq!(logits.shape(), &[1, 4]);
        for &v in logits.softmax(1).unwrap().value().data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn class_count_mismatch_is_config_error() {
        let mut p = ParamSet::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        init_global_classifier(&mut p, 3, 5, &mut rng, DType::F32).unwrap();
        let e = Var::constant(Tensor::zeros(&[2, 3], DType::F32));
        assert!(matches!(global_classifier(&p.bind(false), &e, 4), Err(Error::Config(_))));
        assert!(init_global_classifier(&mut ParamSet::new(), 3, 1, &mut rng, DType::F32).is_err());
    }
}
