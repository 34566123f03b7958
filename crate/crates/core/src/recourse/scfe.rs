use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::models::{Classifier, LinearModel};

use super::{require_negative, Method, RecourseOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfeParams {
    /// Target score `s`; the default `logit(0.6)` sits a 0.1 probability margin past the boundary.
    pub target: f64,
    pub lambda_init: f64,
    pub lambda_decay: f64,
    pub lambda_rounds: usize,
    pub inner_steps: usize,
    pub step_size: f64,
}

impl Default for ScfeParams {
    fn default() -> Self {
        Self {
            target: (0.6f64 / 0.4).ln(),
            lambda_init: 1.0,
            lambda_decay: 0.5,
            lambda_rounds: 10,
            inner_steps: 200,
            step_size: 0.05,
        }
    }
}

impl ScfeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_init > 0.0) {
            return Err(Error::param("lambda_init", "must be positive"));
        }
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return Err(Error::param("lambda_decay", "must lie in (0, 1)"));
        }
        if self.lambda_rounds == 0 || self.inner_steps == 0 {
            return Err(Error::param(
                "lambda_rounds",
                "rounds and inner steps must be at least 1",
            ));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::param("step_size", "must be positive"));
        }
        if !self.target.is_finite() {
            return Err(Error::param("target", "must be finite"));
        }
        Ok(())
    }

    /// Penalty weight used in round `r` (zero based).
    pub fn lambda_at(&self, round: usize) -> f64 {
        self.lambda_init * self.lambda_decay.powi(round as i32)
    }
}

/// Exact minimiser of `(wᵀx′ − s)² + λ‖x′ − x‖²` for a linear model:
/// `ζ = (s − wᵀx)·w / (λ + ‖w‖²)`.
pub fn scfe_closed_form(
    model: &LinearModel,
    x: &Vector,
    s: f64,
    lambda: f64,
) -> Result<RecourseOutcome> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let w = &model.w;
    let wn2 = w.norm_squared();
    if wn2 == 0.0 {
        return Err(Error::ZeroWeights);
    }
    let zeta = w * ((s - model.score(x)?) / (lambda + wn2));
    let x_cf = x + zeta;
    let valid = model.label(&x_cf)? > 0.0;
    let mut out = RecourseOutcome::found(x, x_cf, valid, Method::Scfe, 1);
    out.lambda = Some(lambda);
    Ok(out)
}

/// Gradient descent on `(f(x′) − s)² + λ‖x′ − x‖²` starting at `x′ = x`.
///
/// Each round runs `inner_steps` steps at a fixed `λ`. If the round's final
/// iterate is valid it is returned; otherwise `λ` is multiplied by
/// `lambda_decay` and the next round continues from that iterate. When every
/// round fails the last iterate is returned with `budget_exhausted` set.
pub fn scfe_search<M: Classifier + ?Sized>(
    model: &M,
    x: &Vector,
    p: &ScfeParams,
) -> Result<RecourseOutcome> {
    p.validate()?;
    require_negative(model, x)?;
    let mut xp = x.clone();
    let mut step = 0;
    let mut lambda = p.lambda_init;
    for round in 0..p.lambda_rounds {
        lambda = p.lambda_at(round);
        for _ in 0..p.inner_steps {
            step += 1;
            let f = model.score(&xp)?;
            let diff = &xp - x;
            let objective = (f - p.target).powi(2) + lambda * diff.norm_squared();
            if !objective.is_finite() {
                return Err(Error::NonFiniteObjective { step });
            }
            let grad = model.input_gradient(&xp)? * (2.0 * (f - p.target)) + diff * (2.0 * lambda);
            xp -= grad * p.step_size;
        }
        let f = model.score(&xp)?;
        if !f.is_finite() || !xp.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteObjective { step });
        }
        if f >= 0.0 {
            let mut out = RecourseOutcome::found(x, xp, true, Method::Scfe, step);
            out.lambda = Some(lambda);
            return Ok(out);
        }
    }
    let mut out = RecourseOutcome::found(x, xp, false, Method::Scfe, step);
    out.lambda = Some(lambda);
    Ok(out)
}
