//! Standard and adversarial training for every predictor family and the VAE.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{l1_norm, rng_from_seed, row, sigmoid, sign, softplus_neg, Matrix, Vector};
use crate::models::vae::LOGVAR_RANGE;
use crate::models::{
    ntk_fit, Classifier, LinearModel, MlpModel, Network, NetworkGrads, NtkModel, Predictor,
    TrainTrace, VaeModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub pgd_steps: usize,
    /// Defaults to `2.5·ε / pgd_steps` when absent.
    pub pgd_step_size: Option<f64>,
    pub pgd_random_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            epsilon: 0.0,
            seed: 0,
            pgd_steps: 10,
            pgd_step_size: None,
            pgd_random_start: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive and finite"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be non-negative and finite"));
        }
        if let Some(a) = self.pgd_step_size {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::param("pgd_step_size", "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn effective_pgd_step(&self) -> f64 {
        self.pgd_step_size
            .unwrap_or(2.5 * self.epsilon / self.pgd_steps.max(1) as f64)
    }

    fn trace(&self) -> TrainTrace {
        TrainTrace {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            epsilon: self.epsilon,
        }
    }
}

/// One line of the training run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub epsilon: f64,
}

/// Writes one JSON object per epoch.
pub fn write_run_log(path: impl AsRef<Path>, records: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn require_nonempty(ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

/// Mean robust logistic loss `L(y·wᵀx − ε‖w‖₁)` over the dataset.
pub fn linear_robust_loss(ds: &Dataset, w: &Vector, epsilon: f64) -> f64 {
    let pen = epsilon * l1_norm(w);
    let margins = (&ds.x * w).component_mul(&ds.y);
    margins.iter().map(|m| softplus_neg(m - pen)).sum::<f64>() / ds.len() as f64
}

/// Full-batch gradient of [`linear_robust_loss`], with `sign(0) = 0`.
pub fn linear_robust_gradient(ds: &Dataset, w: &Vector, epsilon: f64) -> Vector {
    let pen = epsilon * l1_norm(w);
    let sw = w.map(sign);
    let scores = &ds.x * w;
    let mut g = Vector::zeros(w.len());
    for i in 0..ds.len() {
        let y = ds.y[i];
        let coef = sigmoid(y * scores[i] - pen) - 1.0;
        let xi = ds.x.row(i);
        for j in 0..w.len() {
            g[j] += coef * (y * xi[j] - epsilon * sw[j]);
        }
    }
    g / ds.len() as f64
}

/// Adversarially trained bias-free logistic regression, `ε = 0` being plain ERM.
///
/// The inner maximisation over `‖δ‖_∞ ≤ ε` is solved exactly by the `ε‖w‖₁`
/// margin penalty. Runs exactly `epochs` full-batch steps from `w = 0`.
pub fn train_linear(ds: &Dataset, cfg: &TrainConfig) -> Result<LinearModel> {
    train_linear_logged(ds, cfg).map(|(m, _)| m)
}

pub fn train_linear_logged(
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LinearModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    require_nonempty(ds)?;
    let mut w = Vector::zeros(ds.dim());
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let g = linear_robust_gradient(ds, &w, cfg.epsilon);
        w -= g * cfg.learning_rate;
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        log.push(EpochRecord {
            epoch,
            loss: linear_robust_loss(ds, &w, cfg.epsilon),
            epsilon: cfg.epsilon,
        });
    }
    Ok((LinearModel::with_trace(w, cfg.trace()), log))
}

/// `x + ε·sign(∇ₓ ℓ(f(x), y))` per row; for the logistic loss this is `ε·sign(−y·∇f)`.
pub fn fgsm_perturb<M: Classifier + ?Sized>(
    model: &M,
    x: &Matrix,
    y: &Vector,
    epsilon: f64,
) -> Result<Matrix> {
    check_dim(x.nrows(), y.len())?;
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be non-negative"));
    }
    let mut out = x.clone();
    if epsilon == 0.0 {
        return Ok(out);
    }
    for i in 0..x.nrows() {
        let g = model.input_gradient(&row(x, i))?;
        for j in 0..x.ncols() {
            out[(i, j)] += epsilon * sign(-y[i] * g[j]);
        }
    }
    Ok(out)
}

/// ℓ∞ PGD on the logistic loss of a single example.
fn pgd_example<R: Rng + ?Sized>(
    net: &Network,
    x: &Vector,
    y: f64,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vector> {
    let eps = cfg.epsilon;
    let step = cfg.effective_pgd_step();
    let mut adv = x.clone();
    if cfg.pgd_random_start {
        for v in adv.iter_mut() {
            *v += rng.random_range(-eps..=eps);
        }
    }
    for _ in 0..cfg.pgd_steps {
        let cache = net.forward_cached(&adv)?;
        let g = net.backward(&cache, &Vector::from_element(1, 1.0), None);
        for j in 0..adv.len() {
            let moved = adv[j] + step * sign(-y * g[j]);
            adv[j] = moved.clamp(x[j] - eps, x[j] + eps);
        }
    }
    Ok(adv)
}

/// ReLU network with `depth` hidden layers of `width` units trained by full-batch
/// gradient descent on the logistic loss; `ε > 0` replaces each batch with PGD
/// adversarial examples against the current parameters.
pub fn train_mlp(ds: &Dataset, depth: usize, width: usize, cfg: &TrainConfig) -> Result<MlpModel> {
    train_mlp_logged(ds, depth, width, cfg).map(|(m, _)| m)
}

pub fn train_mlp_logged(
    ds: &Dataset,
    depth: usize,
    width: usize,
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    require_nonempty(ds)?;
    if depth == 0 || width == 0 {
        return Err(Error::param(
            "architecture",
            "depth and width must be at least 1",
        ));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut sizes = vec![ds.dim()];
    sizes.extend(std::iter::repeat_n(width, depth));
    sizes.push(1);
    let mut net = Network::init(&sizes, &mut rng);
    let n = ds.len() as f64;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut grads = NetworkGrads::zeros_like(&net);
        let mut loss = 0.0;
        for i in 0..ds.len() {
            let x = ds.row(i);
            let y = ds.y[i];
            let input = if cfg.epsilon > 0.0 {
                pgd_example(&net, &x, y, cfg, &mut rng)?
            } else {
                x
            };
            let cache = net.forward_cached(&input)?;
            let f = cache.output()[0];
            loss += softplus_neg(y * f);
            let dl_df = (sigmoid(y * f) - 1.0) * y / n;
            net.backward(&cache, &Vector::from_element(1, dl_df), Some(&mut grads));
        }
        net.apply_step(&grads, cfg.learning_rate);
        if !net.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log.push(EpochRecord {
            epoch,
            loss: loss / n,
            epsilon: cfg.epsilon,
        });
    }
    let mut model = MlpModel::new(net)?;
    model.trace = cfg.trace();
    Ok((model, log))
}

/// NTK ridge model; for `ε > 0` the anchors are FGSM-perturbed training points.
///
/// The attack targets `reference` when given, otherwise the non-robust NTK fit on `x`.
pub fn train_ntk(
    x: &Matrix,
    y: &Vector,
    beta: f64,
    epsilon: f64,
    reference: Option<&Predictor>,
) -> Result<NtkModel> {
    train_ntk_rounds(x, y, beta, epsilon, reference, 1)
}

/// As [`train_ntk`], re-attacking the latest robust model for `rounds` rounds.
pub fn train_ntk_rounds(
    x: &Matrix,
    y: &Vector,
    beta: f64,
    epsilon: f64,
    reference: Option<&Predictor>,
    rounds: usize,
) -> Result<NtkModel> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::param("epsilon", "must be non-negative and finite"));
    }
    if rounds == 0 {
        return Err(Error::param("rounds", "must be at least 1"));
    }
    let base = ntk_fit(x, y, beta)?;
    if epsilon == 0.0 {
        return Ok(base);
    }
    let mut current: Predictor = match reference {
        Some(r) => r.clone(),
        None => base.into(),
    };
    let mut model = None;
    for _ in 0..rounds {
        let anchors = fgsm_perturb(&current, x, y, epsilon)?;
        for i in 0..anchors.nrows() {
            if anchors.row(i).norm() == 0.0 {
                return Err(Error::ZeroNormInput.context(format!("perturbed anchor {i}")));
            }
        }
        let mut fitted = ntk_fit(&anchors, y, beta)?;
        fitted.epsilon = epsilon;
        current = fitted.clone().into();
        model = Some(fitted);
    }
    Ok(model.expect("rounds >= 1"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    /// Defaults to `max(2, ⌊d/2⌋)`.
    pub latent_dim: Option<usize>,
    /// Hidden width of encoder and decoder; defaults to `max(16, 2d)`.
    pub hidden_width: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Weight on the KL term of the negative ELBO.
    pub kl_weight: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            hidden_width: None,
            epochs: 1500,
            learning_rate: 0.02,
            seed: 0,
            holdout_fraction: 0.2,
            kl_weight: 0.05,
        }
    }
}

impl VaeConfig {
    pub fn latent_for(&self, d: usize) -> usize {
        self.latent_dim.unwrap_or((d / 2).max(2))
    }

    pub fn hidden_for(&self, d: usize) -> usize {
        self.hidden_width.unwrap_or((2 * d).max(16))
    }
}

/// Negative ELBO per sample: `½‖x − G(z)‖² + κ·KL(q(z|x) ‖ N(0, I))`, `z = μ + σ ⊙ ξ`.
pub fn vae_sample_loss(vae: &VaeModel, x: &Vector, xi: &Vector, kl_weight: f64) -> Result<f64> {
    let (mu, sigma) = vae.encode(x)?;
    let z = &mu + sigma.component_mul(xi);
    let recon = vae.decode(&z)?;
    let kl: f64 = mu
        .iter()
        .zip(sigma.iter())
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum();
    Ok(0.5 * (recon - x).norm_squared() + kl_weight * kl)
}

fn vae_accumulate(
    vae: &VaeModel,
    x: &Vector,
    xi: &Vector,
    scale: f64,
    kl_weight: f64,
    enc_grads: &mut NetworkGrads,
    dec_grads: &mut NetworkGrads,
) -> Result<f64> {
    let k = vae.latent_dim;
    let enc_cache = vae.encoder.forward_cached(x)?;
    let out = enc_cache.output();
    let mu = out.rows(0, k).into_owned();
    let raw_logvar = out.rows(k, k).into_owned();
    let logvar = raw_logvar.map(|lv| lv.clamp(LOGVAR_RANGE.0, LOGVAR_RANGE.1));
    let sigma = logvar.map(|lv| (0.5 * lv).exp());
    let z = &mu + sigma.component_mul(xi);
    let dec_cache = vae.decoder.forward_cached(&z)?;
    let diff = dec_cache.output() - x;
    let kl: f64 = (0..k)
        .map(|j| 0.5 * (mu[j] * mu[j] + sigma[j] * sigma[j] - 1.0 - logvar[j]))
        .sum();
    let loss = 0.5 * diff.norm_squared() + kl_weight * kl;
    let kl_scale = scale * kl_weight;
    let dz = vae
        .decoder
        .backward(&dec_cache, &(&diff * scale), Some(dec_grads));
    let mut grad_out = Vector::zeros(2 * k);
    for j in 0..k {
        grad_out[j] = dz[j] + kl_scale * mu[j];
        if raw_logvar[j] == logvar[j] {
            grad_out[k + j] =
                dz[j] * xi[j] * 0.5 * sigma[j] + kl_scale * 0.5 * (sigma[j] * sigma[j] - 1.0);
        }
    }
    vae.encoder.backward(&enc_cache, &grad_out, Some(enc_grads));
    Ok(loss)
}

/// Full-batch gradient descent on the negative ELBO with one reparameterised
/// noise draw per sample per epoch. A shuffled holdout split provides the
/// reconstruction statistics stored on the model.
pub fn train_vae(ds: &Dataset, cfg: &VaeConfig) -> Result<VaeModel> {
    train_vae_logged(ds, cfg).map(|(m, _)| m)
}

pub fn train_vae_logged(ds: &Dataset, cfg: &VaeConfig) -> Result<(VaeModel, Vec<EpochRecord>)> {
    require_nonempty(ds)?;
    let d = ds.dim();
    let k = cfg.latent_for(d);
    let h = cfg.hidden_for(d);
    if k == 0 || h == 0 {
        return Err(Error::param(
            "latent_dim",
            "latent and hidden sizes must be at least 1",
        ));
    }
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::param(
            "epochs",
            "epochs and learning rate must be positive",
        ));
    }
    if !(cfg.kl_weight > 0.0) {
        return Err(Error::param("kl_weight", "must be positive"));
    }
    if !(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0) {
        return Err(Error::param("holdout_fraction", "must lie in [0, 1)"));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((ds.len() as f64) * cfg.holdout_fraction).round() as usize;
    let n_hold = n_hold.min(ds.len().saturating_sub(1));
    let (hold, train) = order.split_at(n_hold);
    let hold = if hold.is_empty() { train } else { hold };

    let mut encoder = Network::init(&[d, h, 2 * k], &mut rng);
    let head = encoder.layers.last_mut().expect("two layers");
    head.weight.rows_mut(k, k).fill(0.0);
    let decoder = Network::init(&[k, h, d], &mut rng);
    let mut vae = VaeModel::new(encoder, decoder)?;
    let scale = 1.0 / train.len() as f64;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut enc_grads = NetworkGrads::zeros_like(&vae.encoder);
        let mut dec_grads = NetworkGrads::zeros_like(&vae.decoder);
        let mut loss = 0.0;
        for &i in train {
            let xi = Vector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            loss += vae_accumulate(
                &vae,
                &ds.row(i),
                &xi,
                scale,
                cfg.kl_weight,
                &mut enc_grads,
                &mut dec_grads,
            )?;
        }
        vae.encoder.apply_step(&enc_grads, cfg.learning_rate);
        vae.decoder.apply_step(&dec_grads, cfg.learning_rate);
        if !(vae.encoder.is_finite() && vae.decoder.is_finite() && loss.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        log.push(EpochRecord {
            epoch,
            loss: loss * scale,
            epsilon: 0.0,
        });
    }
    let errs = hold
        .iter()
        .map(|&i| vae.reconstruction_error(&ds.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64;
    vae.val_recon_mean = mean;
    vae.val_recon_std = var.sqrt();
    Ok((vae, log))
}
