use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{rng_from_seed, sample_in_ball, Vector};
use crate::models::{Classifier, VaeModel};

use super::{require_negative, Method, RecourseOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CchvaeParams {
    pub initial_radius: f64,
    pub growth: f64,
    pub samples_per_step: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for CchvaeParams {
    fn default() -> Self {
        Self {
            initial_radius: 0.1,
            growth: 1.2,
            samples_per_step: 500,
            max_steps: 40,
            seed: 0,
        }
    }
}

impl CchvaeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_radius > 0.0) {
            return Err(Error::param("initial_radius", "must be positive"));
        }
        if !(self.growth > 1.0) {
            return Err(Error::param("growth", "must exceed 1"));
        }
        if self.samples_per_step == 0 || self.max_steps == 0 {
            return Err(Error::param(
                "samples_per_step",
                "sample and step counts must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn radius_at(&self, step: usize) -> f64 {
        self.initial_radius * self.growth.powi(step as i32)
    }
}

/// Latent-space search: offsets `ζ` are drawn uniformly from the ℓ2 ball of
/// radius `r` around the encoder mean of `x`, each decoded and scored, with `r`
/// multiplied by `growth` after every empty step. Returns the decoded positive
/// candidate closest to `x` from the first successful step and records its `r`.
pub fn cchvae_search<M: Classifier + ?Sized>(
    model: &M,
    vae: &VaeModel,
    x: &Vector,
    p: &CchvaeParams,
) -> Result<RecourseOutcome> {
    p.validate()?;
    check_dim(vae.input_dim(), x.len())?;
    require_negative(model, x)?;
    let z = vae.encode_mean(x)?;
    let mut rng = rng_from_seed(p.seed);
    for step in 0..p.max_steps {
        let r = p.radius_at(step);
        let mut best: Option<(f64, Vector)> = None;
        for _ in 0..p.samples_per_step {
            let cand = vae.decode(&(&z + sample_in_ball(&mut rng, vae.latent_dim, r)))?;
            if model.label(&cand)? > 0.0 {
                let c = (&cand - x).norm();
                if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                    best = Some((c, cand));
                }
            }
        }
        if let Some((_, cf)) = best {
            let mut out = RecourseOutcome::found(x, cf, true, Method::Cchvae, step + 1);
            out.latent_radius = Some(r);
            return Ok(out);
        }
    }
    Ok(RecourseOutcome::exhausted(x, Method::Cchvae, p.max_steps))
}
