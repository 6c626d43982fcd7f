use super::curvature::CurvatureSet;
use crate::episodes::Task;
use crate::error::{Error, Result};
use crate::learners::Model;
use crate::nn::{Bound, ParamSet};
use crate::tensor::{grad, GradOptions, Gradients, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptConfig {
    pub alpha: f64,
    pub rounds: usize,
    /// Differentiate through the inner gradients (full meta-gradient).
    pub second_order: bool,
    /// Keep the adapted parameters connected to θ (and M) for an outer
    /// gradient. Off at evaluation, where each step starts from fresh
    /// leaves.
    pub track_meta: bool,
}

/// Adapted parameters θ′ and how they were built.
pub struct Adapted {
    pub params: Bound,
    pub second_order: bool,
    pub steps: usize,
}

/// Parameters updated in the inner loop: every trainable tensor except the
/// global classifier, whose labels do not exist inside an episode.
pub fn adaptable_names(theta: &ParamSet) -> Vec<String> {
    theta
        .iter()
        .filter(|(n, p)| p.trainable && !n.starts_with("global/"))
        .map(|(n, _)| n.to_string())
        .collect()
}

/// Runs `rounds` passes over `tasks` in order, one update
/// `θ′ ← θ′ − α·M(∇L)` per task.
pub fn inner_adapt(
    model: &Model,
    theta: &Bound,
    curvature: Option<(&CurvatureSet, &Bound)>,
    tasks: &[Task],
    cfg: &AdaptConfig,
) -> Result<Adapted> {
    if cfg.second_order && !cfg.track_meta {
        return Err(Error::Config("second-order adaptation needs a tracked graph".into()));
    }
    let names: Vec<String> = theta
        .iter()
        .filter(|(n, v)| v.requires_grad() && !n.starts_with("global/"))
        .map(|(n, _)| n.to_string())
        .collect();
    let mut cur = theta.clone();
    let mut steps = 0;
    for round in 0..cfg.rounds {
        for (index, task) in tasks.iter().enumerate() {
            let diag = |loss: f64| Error::NonFiniteLoss { loss, round, index };
            let fwd = model.forward(&cur, task, false).map_err(|e| match e {
                Error::Numeric { .. } => diag(f64::NAN),
                other => other,
            })?;
            let loss = fwd.loss.value().item();
            if !loss.is_finite() {
                return Err(diag(loss));
            }
            let wrt: Vec<Var> = names.iter().map(|n| cur.get(n).cloned()).collect::<Result<_>>()?;
            let g = grad(
                &fwd.loss,
                &wrt,
                GradOptions {
                    create_graph: cfg.second_order,
                },
            )?;
            for (name, (p, gi)) in names.iter().zip(wrt.iter().zip(&g.grads)) {
                let step = match curvature {
                    Some((c, b)) => c.apply(b, name, gi)?,
                    None => gi.clone(),
                };
                let next = p.sub(&step.scale(cfg.alpha)?).map_err(|e| match e {
                    Error::Numeric { .. } => diag(loss),
                    other => other,
                })?;
                let next = if cfg.track_meta {
                    next
                } else {
                    Var::leaf(next.value().clone())
                };
                cur.insert(name.clone(), next);
            }
            steps += 1;
        }
    }
    Ok(Adapted {
        params: cur,
        second_order: cfg.second_order,
        steps,
    })
}

/// Gradient of an outer loss computed on adapted parameters with respect
/// to the meta-parameters in `wrt`. Asking for a second-order gradient from
/// a first-order adaptation is a configuration error.
pub fn meta_gradient(outer: &Var, wrt: &[Var], adapted: &Adapted, second_order: bool) -> Result<Gradients> {
    if second_order && !adapted.second_order && adapted.steps > 0 {
        return Err(Error::Config(
            "second-order meta-gradient requested but the inner loop was built without a gradient graph".into(),
        ));
    }
    grad(outer, wrt, GradOptions::default())
}
