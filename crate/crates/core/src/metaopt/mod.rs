//! Bilevel optimization (MAML and meta-curvature) and the episode-specific
//! fine-tuner used at evaluation time.

mod curvature;
mod inner;
mod optim;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use curvature::{CurvatureMode, CurvatureSet, PREFIX as CURVATURE_PREFIX};
pub use inner::{adaptable_names, inner_adapt, meta_gradient, AdaptConfig, Adapted};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};

use crate::episodes::{divide, Augmenter, Episode, Scheme, Task};
use crate::error::{Error, Result};
use crate::learners::Model;
use crate::nn::ParamSet;
use crate::tensor::{grad, DType, GradOptions, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaKind {
    Maml,
    Mc,
}

impl MetaKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "maml" => Ok(Self::Maml),
            "mc" => Ok(Self::Mc),
            _ => Err(Error::Config(format!("unknown meta-learner {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Maml => "maml",
            Self::Mc => "mc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub meta: MetaKind,
    pub curvature: CurvatureMode,
    pub scheme: Scheme,
    /// Inner learning rate.
    pub alpha: f64,
    /// Outer learning rate.
    pub beta: f64,
    /// Inner rounds over the pseudo-episodes.
    pub rounds: usize,
    pub second_order: bool,
    pub optimizer: OptimizerKind,
    /// Global-norm clipping of outer gradients.
    pub clip: Option<f64>,
    /// Keep the curvature fixed during meta-training.
    pub freeze_curvature: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            meta: MetaKind::Mc,
            curvature: CurvatureMode::Diagonal,
            scheme: Scheme::Rdft,
            alpha: 0.2,
            beta: 1e-3,
            rounds: 8,
            second_order: true,
            optimizer: OptimizerKind::Sgd,
            clip: Some(10.0),
            freeze_curvature: false,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be ≥ 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    fn adapt(&self, track_meta: bool) -> AdaptConfig {
        AdaptConfig {
            alpha: self.alpha,
            rounds: self.rounds,
            second_order: self.second_order && track_meta,
            track_meta,
        }
    }

    fn uses_curvature(&self) -> bool {
        self.meta == MetaKind::Mc
    }
}

/// Outcome of one outer update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub accuracy: f64,
    pub inner_steps: usize,
    pub augment_fallbacks: usize,
}

/// Query accuracy of one test episode before and after fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOutcome {
    pub acc_before: f64,
    pub acc_after: f64,
    pub inner_steps: usize,
    pub augment_fallbacks: usize,
}

pub type SharedAugmenter = Arc<dyn Augmenter + Send + Sync>;

/// Model, initial parameters θ, curvature M and outer-optimizer state.
#[derive(Clone)]
pub struct MetaLearner {
    pub model: Model,
    pub cfg: MetaConfig,
    pub theta: ParamSet,
    pub curvature: Option<CurvatureSet>,
    pub augmenter: Option<SharedAugmenter>,
    optimizer: Optimizer,
}

fn to_config_error(e: Error) -> Error {
    match e {
        Error::UnsupportedShotCount { shots } => Error::Config(format!(
            "division scheme needs at least 2 shots per class, episode has {shots}"
        )),
        other => other,
    }
}

impl MetaLearner {
    pub fn new(model: Model, cfg: MetaConfig, theta: ParamSet) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        let curvature = if cfg.uses_curvature() {
            Some(CurvatureSet::identity(cfg.curvature, &theta, &adaptable_names(&theta))?)
        } else {
            None
        };
        let optimizer = Optimizer::new(cfg.optimizer, cfg.beta);
        Ok(Self {
            model,
            cfg,
            theta,
            curvature,
            augmenter: None,
            optimizer,
        })
    }

    pub fn init<R: rand::Rng + ?Sized>(model: Model, cfg: MetaConfig, rng: &mut R, dtype: DType) -> Result<Self> {
        let theta = model.init_params(rng, dtype)?;
        Self::new(model, cfg, theta)
    }

    pub fn with_augmenter(mut self, augmenter: Option<SharedAugmenter>) -> Self {
        self.augmenter = augmenter;
        self
    }

    fn pseudo_tasks(&self, episode: &Episode, rng: &mut dyn RngCore) -> Result<(Vec<Task>, usize)> {
        let aug = self.augmenter.as_deref().map(|a| a as &dyn Augmenter);
        let pseudo = divide(self.cfg.scheme, &episode.support, aug, rng).map_err(to_config_error)?;
        let fallbacks = pseudo.iter().map(|p| p.augment_fallbacks).sum();
        let tasks = pseudo.iter().map(|p| p.task()).collect::<Result<Vec<_>>>()?;
        Ok((tasks, fallbacks))
    }

    /// One outer update on `episode`: divide its support set, adapt a copy
    /// of θ on the pseudo-episodes, score the adapted model on the full
    /// episode, and step θ (and M unless frozen) with the outer optimizer.
    pub fn meta_step(&mut self, episode: &Episode, rng: &mut dyn RngCore) -> Result<StepReport> {
        let (tasks, fallbacks) = self.pseudo_tasks(episode, rng)?;
        let theta = self.theta.bind(true);
        let curv_bound = self
            .curvature
            .as_ref()
            .map(|c| c.params().bind(!self.cfg.freeze_curvature));
        let curv = self.curvature.as_ref().zip(curv_bound.as_ref());
        let adapted = inner_adapt(&self.model, &theta, curv, &tasks, &self.cfg.adapt(true))?;

        let outer = self.model.forward(&adapted.params, &episode.task()?, true)?;
        let loss = outer.loss.value().item();
        if !loss.is_finite() {
            return Err(Error::Numeric { op: "meta-loss" });
        }

        // Outer gradient targets: trainable θ that the loss can reach, then
        // the curvature when it is being learned and was used.
        let global_used = self.model.head.kind == crate::learners::HeadKind::Can && self.model.head.lambda > 0.0;
        let mut names: Vec<String> = Vec::new();
        let mut wrt: Vec<Var> = Vec::new();
        for (name, p) in self.theta.iter() {
            if p.trainable && (global_used || !name.starts_with("global/")) {
                names.push(name.to_string());
                wrt.push(theta.get(name)?.clone());
            }
        }
        let n_theta = wrt.len();
        if let (Some(c), Some(b)) = (&self.curvature, &curv_bound) {
            if !self.cfg.freeze_curvature && adapted.steps > 0 {
                for (name, p) in c.params().iter() {
                    if p.trainable {
                        names.push(name.to_string());
                        wrt.push(b.get(name)?.clone());
                    }
                }
            }
        }
        let g = meta_gradient(&outer.loss, &wrt, &adapted, self.cfg.second_order)?;
        let mut grads: Vec<_> = g.grads.iter().map(|v| v.value().clone()).collect();
        if let Some(c) = self.cfg.clip {
            clip_global_norm(&mut grads, c);
        }
        drop(adapted);
        for (i, (name, gt)) in names.iter().zip(&grads).enumerate() {
            let target = if i < n_theta {
                &mut self.theta
            } else {
                self.curvature.as_mut().expect("curvature present").params_mut()
            };
            self.optimizer.step(target, name, gt)?;
        }
        Ok(StepReport {
            loss,
            accuracy: outer.accuracy(),
            inner_steps: tasks.len() * self.cfg.rounds,
            augment_fallbacks: fallbacks,
        })
    }

    /// Query accuracy with θ and after temporary fine-tuning on
    /// pseudo-episodes cut from the support set. θ and M are untouched.
    pub fn episode_finetune_eval(&self, episode: &Episode, rng: &mut dyn RngCore) -> Result<FinetuneOutcome> {
        let theta_sum = self.theta.checksum();
        let curv_sum = self.curvature.as_ref().map(CurvatureSet::checksum);

        let task = episode.task()?;
        let before = self.model.forward(&self.theta.bind(false), &task, false)?;
        let (acc_after, steps, fallbacks) = if self.cfg.scheme == Scheme::None || self.cfg.rounds == 0 {
            (before.accuracy(), 0, 0)
        } else {
            let (tasks, fallbacks) = self.pseudo_tasks(episode, rng)?;
            let curv_bound = self.curvature.as_ref().map(|c| c.params().bind(false));
            let curv = self.curvature.as_ref().zip(curv_bound.as_ref());
            let adapted = inner_adapt(&self.model, &self.theta.bind(true), curv, &tasks, &self.cfg.adapt(false))?;
            let after = self.model.forward(&adapted.params, &task, false)?;
            (after.accuracy(), adapted.steps, fallbacks)
        };

        if self.theta.checksum() != theta_sum || self.curvature.as_ref().map(CurvatureSet::checksum) != curv_sum {
            return Err(Error::Data("fine-tuning modified the shared parameters".into()));
        }
        Ok(FinetuneOutcome {
            acc_before: before.accuracy(),
            acc_after,
            inner_steps: steps,
            augment_fallbacks: fallbacks,
        })
    }

    /// Parameters plus curvature tensors, in checkpoint order.
    pub fn checkpoint_entries(&self) -> Vec<(String, crate::tensor::Tensor)> {
        let mut out: Vec<_> = self.theta.iter().map(|(n, p)| (n.to_string(), p.tensor.clone())).collect();
        if let Some(c) = &self.curvature {
            out.extend(c.params().iter().map(|(n, p)| (n.to_string(), p.tensor.clone())));
        }
        out
    }

    /// Restores θ and M from checkpoint entries; layouts must match.
    pub fn load_entries(&mut self, entries: Vec<(String, crate::tensor::Tensor)>) -> Result<()> {
        let mut theta = ParamSet::new();
        let mut curv = ParamSet::new();
        for (name, t) in entries {
            let trainable = self.theta.param(&name).map_or(true, |p| p.trainable);
            if name.starts_with(CURVATURE_PREFIX) {
                curv.insert(name, t, true)?;
            } else {
                theta.insert(name, t, trainable)?;
            }
        }
        self.theta.check_layout(&theta)?;
        self.curvature = match &self.curvature {
            Some(c) => Some(CurvatureSet::from_params(
                c.mode(),
                &theta,
                &c.targets().map(str::to_string).collect::<Vec<_>>(),
                curv,
            )?),
            None if curv.is_empty() => None,
            None => return Err(Error::Config("checkpoint has curvature tensors but meta-learner is maml".into())),
        };
        self.theta = theta;
        Ok(())
    }

    /// Gradient of the episode loss under θ, for diagnostics and tests.
    pub fn loss_and_grad(&self, task: &Task, global: bool) -> Result<(f64, Vec<(String, crate::tensor::Tensor)>)> {
        let b = self.theta.bind(true);
        let fwd = self.model.forward(&b, task, global)?;
        let names: Vec<String> = self.theta.iter().filter(|(_, p)| p.trainable).map(|(n, _)| n.to_string()).collect();
        let wrt: Vec<Var> = names.iter().map(|n| b.get(n).cloned()).collect::<Result<_>>()?;
        let g = grad(&fwd.loss, &wrt, GradOptions::default())?;
        Ok((
            fwd.loss.value().item(),
            names.into_iter().zip(g.grads.into_iter().map(|v| v.value().clone())).collect(),
        ))
    }
}
