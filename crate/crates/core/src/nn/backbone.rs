use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{truncated_normal, Bound, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor, Var};

pub const INIT_STD: f64 = 0.02;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneKind {
    Conv4,
    Resnet12Lite,
}

impl BackboneKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conv4" => Ok(Self::Conv4),
            "resnet12-lite" | "resnet12" => Ok(Self::Resnet12Lite),
            _ => Err(Error::Config(format!("unknown backbone {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Conv4 => "conv4",
            Self::Resnet12Lite => "resnet12-lite",
        }
    }

    pub fn default_widths(self) -> Vec<usize> {
        match self {
            Self::Conv4 => vec![64, 64, 64, 64],
            Self::Resnet12Lite => vec![32, 64, 128, 256],
        }
    }
}

/// Whether embeddings come out flattened (PN/MN) or as `c×h×w` maps (CAN).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingLayout {
    Flat,
    Map,
}

/// Feature extractor description. Input is `bins × frames × 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub bins: usize,
    pub frames: usize,
    pub widths: Vec<usize>,
    pub layout: EmbeddingLayout,
}

impl BackboneSpec {
    pub fn new(kind: BackboneKind, bins: usize, frames: usize, layout: EmbeddingLayout) -> Self {
        Self {
            kind,
            bins,
            frames,
            widths: kind.default_widths(),
            layout,
        }
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = widths;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != 4 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "backbone needs 4 nonzero stage widths, got {:?}",
                self.widths
            )));
        }
        let (c, h, w) = self.output_chw();
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!(
                "input {}×{} is too small for 4 pooling stages",
                self.bins, self.frames
            )));
        }
        Ok(())
    }

    /// Output map shape: every stage halves both spatial extents (floor).
    pub fn output_chw(&self) -> (usize, usize, usize) {
        let (mut h, mut w) = (self.bins, self.frames);
        for _ in 0..4 {
            h /= 2;
            w /= 2;
        }
        (*self.widths.last().unwrap_or(&0), h, w)
    }

    pub fn embedding_len(&self) -> usize {
        let (c, h, w) = self.output_chw();
        c * h * w
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, dtype: DType) -> Result<ParamSet> {
        self.validate()?;
        let mut p = ParamSet::new();
        let mut cin = 1;
        for (i, &cout) in self.widths.iter().enumerate() {
            match self.kind {
                BackboneKind::Conv4 => {
                    let pre = format!("backbone/block{i}");
                    conv_params(&mut p, &format!("{pre}/conv"), cout, cin, 3, true, rng, dtype)?;
                    bn_params(&mut p, &format!("{pre}/bn"), cout, dtype)?;
                }
                BackboneKind::Resnet12Lite => {
                    let pre = format!("backbone/stage{i}");
                    let mut c = cin;
                    for j in 1..=3 {
                        conv_params(&mut p, &format!("{pre}/conv{j}"), cout, c, 3, false, rng, dtype)?;
                        bn_params(&mut p, &format!("{pre}/bn{j}"), cout, dtype)?;
                        c = cout;
                    }
                    conv_params(&mut p, &format!("{pre}/shortcut"), cout, cin, 1, false, rng, dtype)?;
                    bn_params(&mut p, &format!("{pre}/shortcut_bn"), cout, dtype)?;
                }
            }
            cin = cout;
        }
        Ok(p)
    }

    /// Embeds a batch shaped `(B, bins, frames)` or `(B, 1, bins, frames)`.
    pub fn embed(&self, params: &Bound, batch: &Var) -> Result<Var> {
        let s = batch.shape();
        let x = match s.len() {
            3 if s[1] == self.bins && s[2] == self.frames => {
                batch.reshape(&[s[0], 1, self.bins, self.frames])?
            }
            4 if s[1] == 1 && s[2] == self.bins && s[3] == self.frames => batch.clone(),
            _ => return Err(Error::shape("embed", s, &[self.bins, self.frames])),
        };
        let mut h = x;
        for i in 0..self.widths.len() {
            h = match self.kind {
                BackboneKind::Conv4 => {
                    let pre = format!("backbone/block{i}");
                    let y = h.conv2d(params.get(&format!("{pre}/conv.weight"))?, 1)?;
                    let y = y.add(&params.get(&format!("{pre}/conv.bias"))?.reshape(&[1, self.widths[i], 1, 1])?)?;
                    bn(params, &format!("{pre}/bn"), &y)?.relu()?.max_pool2d(2)?
                }
                BackboneKind::Resnet12Lite => {
                    let pre = format!("backbone/stage{i}");
                    let mut y = h.clone();
                    for j in 1..=3 {
                        y = y.conv2d(params.get(&format!("{pre}/conv{j}.weight"))?, 1)?;
                        y = bn(params, &format!("{pre}/bn{j}"), &y)?;
                        if j < 3 {
                            y = y.relu()?;
                        }
                    }
                    let sc = h.conv2d(params.get(&format!("{pre}/shortcut.weight"))?, 0)?;
                    let sc = bn(params, &format!("{pre}/shortcut_bn"), &sc)?;
                    y.add(&sc)?.relu()?.max_pool2d(2)?
                }
            };
        }
        match self.layout {
            EmbeddingLayout::Map => Ok(h),
            EmbeddingLayout::Flat => h.flatten_from(1),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_params<R: Rng + ?Sized>(
    p: &mut ParamSet,
    name: &str,
    cout: usize,
    cin: usize,
    k: usize,
    bias: bool,
    rng: &mut R,
    dtype: DType,
) -> Result<()> {
    p.insert(
        format!("{name}.weight"),
        truncated_normal(rng, &[cout, cin, k, k], INIT_STD, dtype),
        true,
    )?;
    if bias {
        p.insert(format!("{name}.bias"), Tensor::zeros(&[cout], dtype), true)?;
    }
    Ok(())
}

fn bn_params(p: &mut ParamSet, name: &str, c: usize, dtype: DType) -> Result<()> {
    p.insert(format!("{name}.gamma"), Tensor::ones(&[c], dtype), true)?;
    p.insert(format!("{name}.beta"), Tensor::zeros(&[c], dtype), true)
}

fn bn(params: &Bound, name: &str, x: &Var) -> Result<Var> {
    x.batch_norm(
        params.get(&format!("{name}.gamma"))?,
        params.get(&format!("{name}.beta"))?,
        BN_EPS,
    )
}

/// Fits a `bins × frames` feature matrix to `width` frames: wider inputs are
/// center-cropped, narrower ones zero-padded on the right.
pub fn fit_frames(features: &Tensor, width: usize) -> Result<Tensor> {
    if features.ndim() != 2 {
        return Err(Error::shape("fit_frames", features.shape(), &[width]));
    }
    let (bins, frames) = (features.shape()[0], features.shape()[1]);
    if frames == width {
        return Ok(features.clone());
    }
    let mut out = vec![0.0; bins * width];
    let (src_start, dst_start, n) = if frames > width {
        ((frames - width) / 2, 0, width)
    } else {
        (0, 0, frames)
    };
    for b in 0..bins {
        let src = &features.data()[b * frames + src_start..b * frames + src_start + n];
        out[b * width + dst_start..b * width + dst_start + n].copy_from_slice(src);
    }
    Tensor::new(&[bins, width], out, features.dtype())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn conv4_flat_embedding_length_follows_pooling() {
        // Oracle: each pool halves both extents with floor division.
        let spec = BackboneSpec::new(BackboneKind::Conv4, 128, 64, EmbeddingLayout::Flat);
        let (mut h, mut w) = (128usize, 64usize);
        for _ in 0..4 {
            h /= 2;
            w /= 2;
        }
        assert_eq!(spec.embedding_len(), 64 * h * w);
        assert_eq!(spec.embedding_len(), 2048);
    }

    #[test]
    fn conv4_forward_produces_declared_shape() {
        let spec = BackboneSpec::new(BackboneKind::Conv4, 20, 35, EmbeddingLayout::Flat)
            .with_widths(vec![4, 4, 4, 6]);
        let p = spec.init_params(&mut rng(), DType::F32).unwrap();
        let x = Var::constant(Tensor::ones(&[3, 20, 35], DType::F32));
        let y = spec.embed(&p.bind(false), &x).unwrap();
        assert_eq!(y.shape(), &[3, spec.embedding_len()]);
        assert_eq!(spec.embedding_len(), 6 * 1 * 2);
    }

    #[test]
    fn resnet_map_layout_matches_conv4_contract() {
        let a = BackboneSpec::new(BackboneKind::Resnet12Lite, 16, 16, EmbeddingLayout::Map)
            .with_widths(vec![4, 4, 8, 8]);
        let b = BackboneSpec::new(BackboneKind::Conv4, 16, 16, EmbeddingLayout::Map)
            .with_widths(vec![4, 4, 8, 8]);
        let x = Var::constant(Tensor::ones(&[2, 1, 16, 16], DType::F32));
        for spec in [a, b] {
            let p = spec.init_params(&mut rng(), DType::F32).unwrap();
            let y = spec.embed(&p.bind(false), &x).unwrap();
            assert_eq!(y.shape(), &[2, 8, 1, 1]);
        }
    }

    #[test]
    fn wrong_input_shape_is_structural_error() {
        let spec = BackboneSpec::new(BackboneKind::Conv4, 16, 16, EmbeddingLayout::Flat)
            .with_widths(vec![2, 2, 2, 2]);
        let p = spec.init_params(&mut rng(), DType::F32).unwrap();
        let x = Var::constant(Tensor::ones(&[2, 16, 15], DType::F32));
        assert!(matches!(spec.embed(&p.bind(false), &x), Err(Error::Shape { .. })));
    }

    #[test]
    fn fit_frames_crops_center_and_pads_right() {
        let t = Tensor::new(&[1, 6], vec![1., 2., 3., 4., 5., 6.], DType::F32).unwrap();
        assert_eq!(fit_frames(&t, 4).unwrap().data(), &[2., 3., 4., 5.]);
        assert_eq!(fit_frames(&t, 8).unwrap().data(), &[1., 2., 3., 4., 5., 6., 0., 0.]);
    }
}
