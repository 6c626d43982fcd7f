//! Neural building blocks: parameter sets, the two backbones, the global
//! classifier and the checkpoint format.

mod backbone;
pub mod checkpoint;
mod classifier;
mod params;

pub use backbone::{fit_frames, BackboneKind, BackboneSpec, EmbeddingLayout, BN_EPS, INIT_STD};
pub use classifier::{global_classifier, init_global_classifier, BIAS as GLOBAL_BIAS, WEIGHT as GLOBAL_WEIGHT};
pub use params::{truncated_normal, Bound, Param, ParamSet};
