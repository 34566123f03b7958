use crate::error::{check_dim, Error, Result};
use crate::linalg::{spectral_norm, Vector};

use super::mlp::Network;

/// Log-variance outputs are clamped to this range before exponentiation.
pub(crate) const LOGVAR_RANGE: (f64, f64) = (-30.0, 20.0);

/// Gaussian VAE. The encoder emits `[μ; log σ²]` (length `2k`), the decoder maps `ℝ^k → ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: Network,
    pub decoder: Network,
    pub latent_dim: usize,
    /// Mean squared-ℓ2 reconstruction error on the held-out split at the end of training.
    pub val_recon_mean: f64,
    pub val_recon_std: f64,
}

impl VaeModel {
    pub fn new(encoder: Network, decoder: Network) -> Result<Self> {
        let k = decoder.input_dim();
        if k == 0 {
            return Err(Error::param("latent_dim", "must be at least 1"));
        }
        check_dim(2 * k, encoder.output_dim())?;
        check_dim(encoder.input_dim(), decoder.output_dim())?;
        Ok(Self {
            encoder,
            decoder,
            latent_dim: k,
            val_recon_mean: 0.0,
            val_recon_std: 0.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Returns `(μ_z, σ_z)`.
    pub fn encode(&self, x: &Vector) -> Result<(Vector, Vector)> {
        let out = self.encoder.forward(x)?;
        Ok(split_latent(&out, self.latent_dim))
    }

    pub fn encode_mean(&self, x: &Vector) -> Result<Vector> {
        Ok(self.encode(x)?.0)
    }

    pub fn decode(&self, z: &Vector) -> Result<Vector> {
        self.decoder.forward(z)
    }

    /// `‖x − G(μ(x))‖₂²`.
    pub fn reconstruction_error(&self, x: &Vector) -> Result<f64> {
        let recon = self.decode(&self.encode_mean(x)?)?;
        Ok((recon - x).norm_squared())
    }
}

pub(crate) fn split_latent(out: &Vector, k: usize) -> (Vector, Vector) {
    let mu = out.rows(0, k).into_owned();
    let sigma = out
        .rows(k, k)
        .map(|lv| (0.5 * lv.clamp(LOGVAR_RANGE.0, LOGVAR_RANGE.1)).exp());
    (mu, sigma)
}

/// Product of the spectral norms of the decoder weight matrices.
///
/// ReLU is 1-Lipschitz and biases do not affect differences, so this bounds
/// `‖G(z₁) − G(z₂)‖ / ‖z₁ − z₂‖` from above.
pub fn decoder_lipschitz_upper(vae: &VaeModel) -> f64 {
    vae.decoder
        .layers
        .iter()
        .map(|l| spectral_norm(&l.weight))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rng_from_seed, Matrix};
    use crate::models::Dense;
    use rand::Rng;

    fn layer(w: Matrix) -> Dense {
        let n = w.nrows();
        Dense::new(w, Vector::zeros(n)).unwrap()
    }

    fn random_vae(d: usize, k: usize, seed: u64) -> VaeModel {
        let mut rng = rng_from_seed(seed);
        let enc = Network::init(&[d, 2 * d, 2 * k], &mut rng);
        let mut dec = Network::init(&[k, 2 * d, d], &mut rng);
        for l in &mut dec.layers {
            l.bias = Vector::from_fn(l.bias.len(), |_, _| rng.random_range(-1.0..1.0));
        }
        VaeModel::new(enc, dec).unwrap()
    }

    #[test]
    fn scaled_identity_decoder() {
        let enc = Network::new(vec![layer(Matrix::zeros(4, 2))]).unwrap();
        let dec = Network::new(vec![layer(Matrix::identity(2, 2) * 2.0)]).unwrap();
        let vae = VaeModel::new(enc, dec).unwrap();
        assert!((decoder_lipschitz_upper(&vae) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn product_of_layer_norms() {
        let enc = Network::new(vec![layer(Matrix::zeros(4, 2))]).unwrap();
        let dec = Network::new(vec![
            layer(Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]))),
            layer(Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 3.0]))),
        ])
        .unwrap();
        let vae = VaeModel::new(enc, dec).unwrap();
        assert!((decoder_lipschitz_upper(&vae) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_dominates_sampled_quotients() {
        let vae = random_vae(4, 2, 11);
        let upper = decoder_lipschitz_upper(&vae);
        let mut rng = rng_from_seed(12);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let z1 = Vector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let z2 = Vector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let num = (vae.decode(&z1).unwrap() - vae.decode(&z2).unwrap()).norm();
            worst = worst.max(num / (z1 - z2).norm());
        }
        assert!(worst <= upper, "{worst} > {upper}");
    }

    #[test]
    fn zero_latent_decodes_to_bias_path() {
        let vae = random_vae(3, 2, 3);
        let out = vae.decode(&Vector::zeros(2)).unwrap();
        let hidden = vae.decoder.layers[0].bias.map(|b| b.max(0.0));
        let expected = &vae.decoder.layers[1].weight * hidden + &vae.decoder.layers[1].bias;
        assert!((out - expected).norm() < 1e-14);
    }

    #[test]
    fn sigma_is_positive() {
        let vae = random_vae(3, 2, 4);
        let mut rng = rng_from_seed(5);
        for _ in 0..200 {
            let x = Vector::from_fn(3, |_, _| rng.random_range(-100.0..100.0));
            let (mu, sigma) = vae.encode(&x).unwrap();
            assert!(sigma.iter().all(|s| *s > 0.0));
            assert!(vae.decode(&mu).unwrap().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn dimension_checks() {
        let vae = random_vae(3, 2, 4);
        assert!(vae.encode(&Vector::zeros(2)).is_err());
        assert!(vae.decode(&Vector::zeros(3)).is_err());
        let enc = Network::new(vec![layer(Matrix::zeros(3, 2))]).unwrap();
        let dec = Network::new(vec![layer(Matrix::zeros(2, 2))]).unwrap();
        assert!(VaeModel::new(enc, dec).is_err());
    }
}
