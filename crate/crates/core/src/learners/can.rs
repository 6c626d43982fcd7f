//! Cross-attention head: correlation maps between prototype and query
//! feature maps, a meta fusion layer producing a kernel over correlation
//! rows, and temperature-softmax spatial attention.

use rand::Rng;

use super::{Distance, HeadConfig};
use crate::error::{Error, Result};
use crate::nn::{truncated_normal, Bound, ParamSet, INIT_STD};
use crate::tensor::{DType, Tensor, Var};

pub const FUSION_W1: &str = "head/fusion.w1";
pub const FUSION_W2: &str = "head/fusion.w2";

/// Fusion layer `m → max(1, m/2) → m`, no biases. One layer serves both
/// the class and the query attention.
pub fn init_fusion<R: Rng + ?Sized>(p: &mut ParamSet, m: usize, rng: &mut R, dtype: DType) -> Result<()> {
    let hidden = (m / 2).max(1);
    p.insert(FUSION_W1, truncated_normal(rng, &[hidden, m], INIT_STD, dtype), true)?;
    p.insert(FUSION_W2, truncated_normal(rng, &[m, hidden], INIT_STD, dtype), true)
}

fn local_vectors(maps: &Var) -> Result<Var> {
    let s = maps.shape();
    let (b, c, m) = (s[0], s[1], s[2] * s[3]);
    maps.reshape(&[b, c, m])?
        .permute(&[0, 2, 1])?
        .reshape(&[b * m, c])?
        .l2_normalize_rows()
}

/// Correlation `R (queries, way, m, m)` with `R[q,k,i,p]` the cosine
/// similarity between prototype `k` at position `i` and query `q` at
/// position `p`. The query correlation map is `R`, the class map its
/// transpose over the last two axes.
pub fn can_correlation(prototypes: &Var, queries: &Var) -> Result<Var> {
    let (ps, qs) = (prototypes.shape(), queries.shape());
    if ps.len() != 4 || qs.len() != 4 || ps[1..] != qs[1..] {
        return Err(Error::shape("can_correlation", ps, qs));
    }
    let (k, n, m) = (ps[0], qs[0], ps[2] * ps[3]);
    let r = local_vectors(prototypes)?.matmul(&local_vectors(queries)?.t()?)?;
    r.reshape(&[k, m, n, m])?.permute(&[2, 0, 1, 3])
}

/// Attention over the columns of each correlation map `rx (B, m, m)`:
/// `w = W2·relu(W1·mean_cols(rx))`, `A_j = softmax_j(wᵀ rx[:, j] / τ)`.
/// Returns `(B, m)`.
pub fn can_attention(rx: &Var, w1: &Var, w2: &Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("attention temperature must be positive, got {tau}")));
    }
    let s = rx.shape();
    if s.len() != 3 || s[1] != s[2] || w1.shape().get(1) != Some(&s[1]) || w2.shape().first() != Some(&s[1]) {
        return Err(Error::shape("can_attention", s, w1.shape()));
    }
    let (b, m) = (s[0], s[1]);
    let kernel = rx.mean_axis(2, false)?.linear(w1, None)?.relu()?.linear(w2, None)?;
    let scores = rx.mul(&kernel.reshape(&[b, m, 1])?)?.sum_axis(1, false)?;
    scores.scale(1.0 / tau)?.softmax(1)
}

/// `feature ⊙ (1 + A)`, broadcasting `A (…, h, w)` over the channel axis
/// of `feature (…, c, h, w)`.
pub fn can_apply_attention(feature: &Var, attention: &Var) -> Result<Var> {
    let (f, a) = (feature.shape(), attention.shape());
    if f.len() < 3 || a.len() + 1 != f.len() || f[f.len() - 2..] != a[a.len() - 2..] {
        return Err(Error::shape("can_apply_attention", f, a));
    }
    let mut shape = a[..a.len() - 2].to_vec();
    shape.extend_from_slice(&[1, a[a.len() - 2], a[a.len() - 1]]);
    feature.mul(&attention.add_scalar(1.0)?.reshape(&shape)?)
}

pub(super) struct CanOutput {
    pub logits: Var,
    pub attention: (Tensor, Tensor),
}

pub(super) fn forward(
    params: &Bound,
    support: &Var,
    query: &Var,
    way: usize,
    shot: usize,
    cfg: &HeadConfig,
) -> Result<CanOutput> {
    let protos = super::pn_prototypes(support, way, shot)?;
    let ps = protos.shape().to_vec();
    let (c, h, w) = (ps[1], ps[2], ps[3]);
    let m = h * w;
    let n = query.shape()[0];

    let r = can_correlation(&protos, query)?;
    let (w1, w2) = (params.get(FUSION_W1)?, params.get(FUSION_W2)?);
    let rq = r.reshape(&[n * way, m, m])?;
    let rc = r.permute(&[0, 1, 3, 2])?.reshape(&[n * way, m, m])?;
    let a_class = can_attention(&rc, w1, w2, cfg.tau)?.reshape(&[n, way, h, w])?;
    let a_query = can_attention(&rq, w1, w2, cfg.tau)?.reshape(&[n, way, h, w])?;

    let p_att = can_apply_attention(&protos.reshape(&[1, way, c, h, w])?, &a_class)?;
    let q_att = can_apply_attention(&query.reshape(&[n, 1, c, h, w])?, &a_query)?;
    let d = p_att.sub(&q_att)?.square()?.reshape(&[n, way, c * m])?.sum_axis(2, false)?;
    let logits = match cfg.distance {
        Distance::SquaredEuclidean => d.neg()?,
        Distance::Euclidean => d.clamp_min(1e-12)?.sqrt()?.neg()?,
    };
    Ok(CanOutput {
        logits,
        attention: (a_class.value().clone(), a_query.value().clone()),
    })
}
