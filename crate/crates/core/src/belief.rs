//! Perception-based belief updates.
//!
//! The vision likelihood `O_v(z_v | s_v)` is never available. Inverting it
//! with Bayes' rule under a uniform prior over vision classes leaves
//! `f(s_v | z_v) · Pr(z_v) / Pr(s_v)`, and both the evidence term and the
//! (constant) prior cancel in the normalization. The update therefore
//! weights each successor state by the perception output for its vision
//! class and by the non-vision likelihood.

use crate::error::{PbpError, Result};
use crate::model::{propagate, Belief, VPomdpModel};
use crate::perception::{apply_uq, check_dist, PerceptionOutput, UqMode};

/// Perception probabilities below this are treated as exact zeros.
pub const PERC_ZERO: f64 = 1e-12;

/// Result of a perception-based update.
#[derive(Debug, Clone, PartialEq)]
pub struct PbpOutcome {
    pub belief: Belief,
    /// The normalizer was zero and the uniform belief over all states was used.
    pub fallback: bool,
}

#[inline]
fn clean(p: f64) -> f64 {
    if p < PERC_ZERO {
        0.0
    } else {
        p
    }
}

fn check_perc(model: &VPomdpModel, perc_dist: &[f64]) -> Result<()> {
    if perc_dist.len() != model.n_vision_classes() {
        return Err(PbpError::InvalidArgument(format!(
            "perception distribution has {} entries, model has {} vision classes",
            perc_dist.len(),
            model.n_vision_classes()
        )));
    }
    if perc_dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(PbpError::InvalidArgument(
            "perception distribution has negative entries".into(),
        ));
    }
    Ok(())
}

/// Perception-based update. `z_nv = None` is the pure-vision case.
///
/// `perc_dist` is only required to be nonnegative: any positive rescaling
/// yields the same belief.
pub fn pbp_update(
    model: &VPomdpModel,
    b: &Belief,
    a: usize,
    perc_dist: &[f64],
    z_nv: Option<usize>,
) -> Result<PbpOutcome> {
    check_perc(model, perc_dist)?;
    model.check_nonvision_obs(z_nv)?;
    let pred = propagate(model, b, a)?;
    let w: Vec<f64> = pred
        .iter()
        .enumerate()
        .map(|(s, p)| p * clean(perc_dist[model.vision_class(s)]) * model.nonvision_prob(s, z_nv))
        .collect();
    Ok(match Belief::from_weights(&w) {
        Some(belief) => PbpOutcome {
            belief,
            fallback: false,
        },
        None => PbpOutcome {
            belief: Belief::uniform(model.n_states()),
            fallback: true,
        },
    })
}

/// Lifts a distribution over vision classes to one weight per state.
pub fn lift_to_states(model: &VPomdpModel, perc_dist: &[f64]) -> Vec<f64> {
    (0..model.n_states())
        .map(|s| perc_dist[model.vision_class(s)])
        .collect()
}

/// Pointwise product of two distributions over the same set, renormalized.
pub fn multiplicative_pool(d1: &[f64], d2: &[f64]) -> Result<Vec<f64>> {
    if d1.len() != d2.len() {
        return Err(PbpError::InvalidArgument("pooled distributions differ in length".into()));
    }
    let w: Vec<f64> = d1.iter().zip(d2).map(|(x, y)| x * clean(*y)).collect();
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0) {
        return Err(PbpError::EmptyPool);
    }
    Ok(w.into_iter().map(|x| x / sum).collect())
}

/// [`pbp_update`] with the perception output first passed through the
/// configured uncertainty wrapper.
pub fn uncertainty_aware_update(
    model: &VPomdpModel,
    b: &Belief,
    a: usize,
    out: &PerceptionOutput,
    z_nv: Option<usize>,
    mode: UqMode,
) -> Result<PbpOutcome> {
    check_dist(&out.dist)?;
    pbp_update(model, b, a, &apply_uq(out, mode), z_nv)
}

/// Belief used by the PSRL-style baseline: the raw perception output replaces
/// the vision marginal, while the non-vision marginal is filtered exactly with
/// `O_nv` alone.
pub fn psrl_update(
    model: &VPomdpModel,
    b: &Belief,
    a: usize,
    perc_dist: &[f64],
    z_nv: Option<usize>,
) -> Result<PbpOutcome> {
    check_perc(model, perc_dist)?;
    model.check_nonvision_obs(z_nv)?;
    let pred = propagate(model, b, a)?;
    let mut nonvision = vec![0.0; model.n_nonvision_classes()];
    for (s, p) in pred.iter().enumerate() {
        nonvision[model.nonvision_class(s)] += p * model.nonvision_prob(s, z_nv);
    }
    let nv_sum: f64 = nonvision.iter().sum();
    let w: Vec<f64> = if nv_sum > 0.0 {
        (0..model.n_states())
            .map(|s| clean(perc_dist[model.vision_class(s)]) * nonvision[model.nonvision_class(s)])
            .collect()
    } else {
        vec![0.0; model.n_states()]
    };
    Ok(match Belief::from_weights(&w) {
        Some(belief) => PbpOutcome {
            belief,
            fallback: false,
        },
        None => PbpOutcome {
            belief: Belief::uniform(model.n_states()),
            fallback: true,
        },
    })
}
