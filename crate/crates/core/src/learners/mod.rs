//! Metric-based heads (prototypical, matching, cross-attention) and the
//! episode loss that ties them to a backbone.

mod can;
mod metric;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use can::{
    can_apply_attention, can_attention, can_correlation, init_fusion, FUSION_W1, FUSION_W2,
};
pub use metric::{mn_classify, pn_classify, pn_logits, pn_prototypes};

use crate::episodes::Task;
use crate::error::{Error, Result};
use crate::nn::{
    global_classifier, init_global_classifier, BackboneSpec, Bound, EmbeddingLayout, ParamSet,
};
use crate::tensor::{argmax_rows, DType, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Pn,
    Mn,
    Can,
}

impl HeadKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pn" => Ok(Self::Pn),
            "mn" => Ok(Self::Mn),
            "can" => Ok(Self::Can),
            _ => Err(Error::Config(format!("unknown head {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Pn => "pn",
            Self::Mn => "mn",
            Self::Can => "can",
        }
    }

    /// Embedding layout the head consumes.
    pub fn layout(self) -> EmbeddingLayout {
        match self {
            Self::Can => EmbeddingLayout::Map,
            _ => EmbeddingLayout::Flat,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    SquaredEuclidean,
    Euclidean,
}

impl Distance {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "squared-euclidean" | "sqeuclidean" => Ok(Self::SquaredEuclidean),
            "euclidean" => Ok(Self::Euclidean),
            _ => Err(Error::Config(format!("unknown distance {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SquaredEuclidean => "squared-euclidean",
            Self::Euclidean => "euclidean",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub distance: Distance,
    /// Attention softmax temperature (CAN).
    pub tau: f64,
    /// Weight of the global classification loss (CAN).
    pub lambda: f64,
}

impl HeadConfig {
    pub fn new(kind: HeadKind) -> Self {
        Self {
            kind,
            distance: Distance::SquaredEuclidean,
            tau: 0.1,
            lambda: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("attention temperature must be positive, got {}", self.tau)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("global loss weight must be ≥ 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Backbone plus head, and the training-class list that indexes the CAN
/// global classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub backbone: BackboneSpec,
    pub head: HeadConfig,
    pub train_classes: Vec<usize>,
}

/// Result of one forward pass over a task.
#[derive(Clone, Debug)]
pub struct Forward {
    pub loss: Var,
    /// `(queries × way)` scores whose argmax is the prediction.
    pub logits: Var,
    pub predictions: Vec<usize>,
    pub correct: usize,
    /// CAN only: class and query attention, each `(queries, way, h, w)`.
    pub attention: Option<(Tensor, Tensor)>,
}

impl Forward {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.predictions.len() as f64
    }
}

impl Model {
    pub fn new(backbone: BackboneSpec, head: HeadConfig, train_classes: Vec<usize>) -> Result<Self> {
        let m = Self {
            backbone,
            head,
            train_classes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.head.validate()?;
        if self.backbone.layout != self.head.kind.layout() {
            return Err(Error::Config(format!(
                "{} head needs {:?} embeddings",
                self.head.kind.name(),
                self.head.kind.layout()
            )));
        }
        if self.head.kind == HeadKind::Can && self.train_classes.len() < 2 {
            return Err(Error::Config("CAN global classifier needs at least 2 training classes".into()));
        }
        Ok(())
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, dtype: DType) -> Result<ParamSet> {
        self.validate()?;
        let mut p = self.backbone.init_params(rng, dtype)?;
        if self.head.kind == HeadKind::Can {
            let (_, h, w) = self.backbone.output_chw();
            init_fusion(&mut p, h * w, rng, dtype)?;
            init_global_classifier(&mut p, self.backbone.embedding_len(), self.train_classes.len(), rng, dtype)?;
        }
        Ok(p)
    }

    fn global_labels(&self, classes: &[usize]) -> Result<Vec<usize>> {
        classes
            .iter()
            .map(|c| {
                self.train_classes
                    .iter()
                    .position(|t| t == c)
                    .ok_or_else(|| Error::Data(format!("class {c} is not a training class")))
            })
            .collect()
    }

    /// Loss and predictions on `task`. `global` enables the CAN global
    /// classification term; it is ignored for the other heads.
    pub fn forward(&self, params: &Bound, task: &Task, global: bool) -> Result<Forward> {
        let dtype = params.iter().next().map_or(DType::F32, |(_, v)| v.dtype());
        let support = Var::constant(task.support.to_dtype(dtype));
        let query = Var::constant(task.query.to_dtype(dtype));
        let s = self.backbone.embed(params, &support)?;
        let q = self.backbone.embed(params, &query)?;
        let (way, shot) = (task.way, task.shot);

        let (logits, loss, attention) = match self.head.kind {
            HeadKind::Pn => {
                let logits = pn_logits(&q, &pn_prototypes(&s, way, shot)?, self.head.distance)?;
                let loss = logits.cross_entropy(&task.query_labels)?;
                (logits, loss, None)
            }
            HeadKind::Mn => {
                let log_p = mn_classify(&q, &s, way, shot)?.log()?;
                let loss = log_p.nll(&task.query_labels)?;
                (log_p, loss, None)
            }
            HeadKind::Can => {
                let out = can::forward(params, &s, &q, way, shot, &self.head)?;
                let mut loss = out.logits.cross_entropy(&task.query_labels)?;
                if global && self.head.lambda > 0.0 {
                    let labels = self.global_labels(&task.query_classes)?;
                    let g = global_classifier(params, &q.flatten_from(1)?, self.train_classes.len())?;
                    loss = loss.add(&g.cross_entropy(&labels)?.scale(self.head.lambda)?)?;
                }
                (out.logits, loss, Some(out.attention))
            }
        };
        if !loss.value().all_finite() {
            return Err(Error::Numeric { op: "episode_loss" });
        }
        let predictions = argmax_rows(logits.value());
        let correct = predictions
            .iter()
            .zip(&task.query_labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(Forward {
            loss,
            logits,
            predictions,
            correct,
            attention,
        })
    }
}

/// Writes attention grids as CSV rows
/// `query,class,map,v0,…` with `map ∈ {class, query}` and values in
/// row-major `h×w` order.
pub fn write_attention_csv<W: Write>(attention: &(Tensor, Tensor), out: &mut W) -> std::io::Result<()> {
    writeln!(out, "query,class,map,values")?;
    for (tag, t) in [("class", &attention.0), ("query", &attention.1)] {
        let s = t.shape();
        let m = s[2] * s[3];
        for q in 0..s[0] {
            for k in 0..s[1] {
                let base = (q * s[1] + k) * m;
                let vals: Vec<String> = t.data()[base..base + m].iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{q},{k},{tag},{}", vals.join(","))?;
            }
        }
    }
    Ok(())
}
