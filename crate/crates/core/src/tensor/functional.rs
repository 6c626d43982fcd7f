//! Composite operations built from the primitive graph ops. Their gradients
//! (of any order) follow from the primitives' rules.

use std::rc::Rc;

use super::{kernels, numel, Tensor, Var};
use crate::error::{Error, Result};

/// Floor applied to vector norms in cosine similarity.
pub const NORM_FLOOR: f64 = 1e-12;

fn keep_axis_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s[axis] = 1;
    s
}

impl Var {
    fn check_axis(&self, axis: usize, op: &'static str) -> Result<()> {
        if axis >= self.shape().len() {
            return Err(Error::shape(op, self.shape(), &[axis]));
        }
        Ok(())
    }

    pub fn sum_all(&self) -> Result<Var> {
        self.sum_to_shape(&[])
    }

    pub fn mean_all(&self) -> Result<Var> {
        let n = self.value().len() as f64;
        self.sum_all()?.scale(1.0 / n)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Var> {
        self.check_axis(axis, "sum_axis")?;
        let kept = keep_axis_shape(self.shape(), axis);
        let s = self.sum_to_shape(&kept)?;
        if keepdim {
            Ok(s)
        } else {
            let mut shape = self.shape().to_vec();
            shape.remove(axis);
            s.reshape(&shape)
        }
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Var> {
        self.check_axis(axis, "mean_axis")?;
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis, keepdim)?.scale(1.0 / n)
    }

    /// Per-slice maximum along `axis` as a constant (keepdim layout).
    fn max_along(&self, axis: usize) -> Tensor {
        let x = self.value();
        let shape = x.shape();
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    let v = x.data()[(o * len + a) * inner + i];
                    let slot = &mut out[o * inner + i];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
        Tensor::from_raw(keep_axis_shape(shape, axis), out, x.dtype())
    }

    pub fn softmax(&self, axis: usize) -> Result<Var> {
        self.check_axis(axis, "softmax")?;
        if !self.value().all_finite() {
            return Err(Error::Numeric { op: "softmax" });
        }
        let shifted = self.sub(&Var::constant(self.max_along(axis)))?;
        let e = shifted.exp()?;
        let s = e.sum_axis(axis, true)?;
        e.div(&s)
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Var> {
        self.check_axis(axis, "log_softmax")?;
        if !self.value().all_finite() {
            return Err(Error::Numeric { op: "log_softmax" });
        }
        let shifted = self.sub(&Var::constant(self.max_along(axis)))?;
        let lse = shifted.exp()?.sum_axis(axis, true)?.log()?;
        shifted.sub(&lse)
    }

    /// Rows `rows` of the leading axis.
    pub fn index_select(&self, rows: &[usize]) -> Result<Var> {
        let shape = self.shape();
        if shape.is_empty() || rows.iter().any(|&r| r >= shape[0]) {
            return Err(Error::shape("index_select", shape, rows));
        }
        let row_len: usize = shape[1..].iter().product();
        let idx: Vec<usize> = rows
            .iter()
            .flat_map(|&r| r * row_len..(r + 1) * row_len)
            .collect();
        let mut out_shape = shape.to_vec();
        out_shape[0] = rows.len();
        self.gather(Rc::new(idx), &out_shape)
    }

    /// `k×k` max-pool with stride `k` over NCHW input; trailing rows and
    /// columns that do not fill a window are dropped.
    pub fn max_pool2d(&self, k: usize) -> Result<Var> {
        let shape = self.shape();
        if shape.len() != 4 || shape[2] < k || shape[3] < k || k == 0 {
            return Err(Error::shape("max_pool2d", shape, &[k, k]));
        }
        let (out_shape, idx) = kernels::max_pool2d_indices(self.value().data(), shape, k);
        self.gather(Rc::new(idx), &out_shape)
    }

    /// Normalization over batch statistics of an NCHW map: per channel,
    /// `(x - mean) / sqrt(var + eps) * gamma + beta`, biased variance.
    pub fn batch_norm(&self, gamma: &Var, beta: &Var, eps: f64) -> Result<Var> {
        let shape = self.shape();
        if shape.len() != 4 || gamma.shape() != [shape[1]] || beta.shape() != [shape[1]] {
            return Err(Error::shape("batch_norm", shape, gamma.shape()));
        }
        let c = shape[1];
        let stat_shape = [1, c, 1, 1];
        let count = (shape[0] * shape[2] * shape[3]) as f64;
        let mean = self.sum_to_shape(&stat_shape)?.scale(1.0 / count)?;
        let centered = self.sub(&mean)?;
        let var = centered.square()?.sum_to_shape(&stat_shape)?.scale(1.0 / count)?;
        let inv_std = var.add_scalar(eps)?.powf(-0.5)?;
        centered
            .mul(&inv_std)?
            .mul(&gamma.reshape(&stat_shape)?)?
            .add(&beta.reshape(&stat_shape)?)
    }

    /// `x · wᵀ + b` for `x (n×in)`, `w (out×in)`, `b (out)`.
    pub fn linear(&self, weight: &Var, bias: Option<&Var>) -> Result<Var> {
        let y = self.matmul(&weight.t()?)?;
        match bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }

    /// Pairwise squared euclidean distances between rows of `self (n×d)`
    /// and `other (k×d)`, shape `n×k`.
    pub fn sq_euclidean(&self, other: &Var) -> Result<Var> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[1] {
            return Err(Error::shape("sq_euclidean", a, b));
        }
        let (n, k, d) = (a[0], b[0], a[1]);
        let diff = self.reshape(&[n, 1, d])?.sub(&other.reshape(&[1, k, d])?)?;
        diff.square()?.sum_axis(2, false)
    }

    /// Rows scaled to unit norm, norms clamped below at [`NORM_FLOOR`].
    pub fn l2_normalize_rows(&self) -> Result<Var> {
        if self.shape().len() != 2 {
            return Err(Error::shape("l2_normalize_rows", self.shape(), &[]));
        }
        let norm = self
            .square()?
            .sum_axis(1, true)?
            .clamp_min(NORM_FLOOR * NORM_FLOOR)?
            .sqrt()?;
        self.div(&norm)
    }

    /// Pairwise cosine similarity between rows of `self (n×d)` and
    /// `other (k×d)`, shape `n×k`.
    pub fn cosine_similarity(&self, other: &Var) -> Result<Var> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[1] {
            return Err(Error::shape("cosine_similarity", a, b));
        }
        self.l2_normalize_rows()?
            .matmul(&other.l2_normalize_rows()?.t()?)
    }

    /// Mean negative log-likelihood of `labels` under row-wise
    /// `log_probs (n×k)`.
    pub fn nll(&self, labels: &[usize]) -> Result<Var> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::shape("nll", shape, &[labels.len()]));
        }
        let k = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Data(format!("label {bad} outside {k} classes")));
        }
        let idx: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| i * k + l).collect();
        self.gather(Rc::new(idx), &[labels.len()])?
            .mean_all()?
            .neg()
    }

    /// Mean cross-entropy of row-wise `logits (n×k)` against `labels`.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Var> {
        self.log_softmax(1)?.nll(labels)
    }

    pub fn flatten_from(&self, axis: usize) -> Result<Var> {
        let shape = self.shape();
        let mut out: Vec<usize> = shape[..axis].to_vec();
        out.push(numel(&shape[axis..]));
        self.reshape(&out)
    }
}

/// Index of the largest entry of each row of an `n×k` tensor (first wins).
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let k = *t.shape().last().unwrap_or(&1);
    t.data()
        .chunks(k.max(1))
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DType;

    fn c(shape: &[usize], data: Vec<f64>) -> Var {
        Var::constant(Tensor::new(shape, data, DType::F64).unwrap())
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = c(&[3], vec![0.0; 3]).softmax(0).unwrap();
        for &v in p.value().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_of_vector_with_itself_is_one() {
        let v = c(&[1, 4], vec![0.3, -2.0, 5.0, 0.01]);
        let s = v.cosine_similarity(&v).unwrap();
        assert!((s.value().item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_zero_vector_is_finite() {
        let z = c(&[1, 3], vec![0.0; 3]);
        let v = c(&[1, 3], vec![1.0, 2.0, 3.0]);
        assert_eq!(z.cosine_similarity(&v).unwrap().value().item(), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let logits = c(&[2, 4], vec![0.0; 8]);
        let l = logits.cross_entropy(&[1, 3]).unwrap();
        assert!((l.value().item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        let logits = c(&[1, 2], vec![0.0; 2]);
        assert!(matches!(logits.cross_entropy(&[2]), Err(Error::Data(_))));
    }

    #[test]
    fn max_pool_floors_odd_extents() {
        let x = c(&[1, 1, 3, 5], (0..15).map(|v| v as f64).collect());
        let y = x.max_pool2d(2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.value().data(), &[6.0, 8.0]);
    }
}
