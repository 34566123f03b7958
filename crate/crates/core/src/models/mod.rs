//! Predictors (linear, NTK, MLP) and the VAE used for manifold recourse.
//!
//! Every predictor maps `ℝ^d → ℝ`; the returned score is pre-sigmoid and the
//! positive class is `score ≥ 0`.

mod format;
mod linear;
mod mlp;
mod ntk;
pub(crate) mod vae;

pub use format::{parse_predictor, parse_vae, write_predictor, write_vae};
pub use linear::LinearModel;
pub use mlp::{Dense, ForwardCache, MlpModel, Network, NetworkGrads};
pub use ntk::{ntk_fit, ntk_kernel, ntk_kernel_gradient, ntk_kernel_matrix, NtkModel, COS_CLAMP};
pub use vae::{decoder_lipschitz_upper, VaeModel};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{sigmoid, Vector};

/// Hyper-parameters recorded at training time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub prob: f64,
    /// `+1.0` iff `score ≥ 0`.
    pub label: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        Self {
            score,
            prob: sigmoid(score),
            label: if score >= 0.0 { 1.0 } else { -1.0 },
        }
    }
}

/// Anything with a real-valued score and an input gradient.
pub trait Classifier: Sync {
    fn dim(&self) -> usize;

    fn score(&self, x: &Vector) -> Result<f64>;

    /// `∇ₓ score(x)`.
    fn input_gradient(&self, x: &Vector) -> Result<Vector>;

    fn predict(&self, x: &Vector) -> Result<Prediction> {
        self.score(x).map(Prediction::from_score)
    }

    fn label(&self, x: &Vector) -> Result<f64> {
        Ok(self.predict(x)?.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Linear(LinearModel),
    Ntk(NtkModel),
    Mlp(MlpModel),
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Linear(_) => "linear",
            Predictor::Ntk(_) => "ntk",
            Predictor::Mlp(_) => "mlp",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Predictor::Linear(m) => m.trace.epsilon,
            Predictor::Ntk(m) => m.epsilon,
            Predictor::Mlp(m) => m.trace.epsilon,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match self {
            Predictor::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_ntk(&self) -> Option<&NtkModel> {
        match self {
            Predictor::Ntk(m) => Some(m),
            _ => None,
        }
    }
}

impl Classifier for Predictor {
    fn dim(&self) -> usize {
        match self {
            Predictor::Linear(m) => m.dim(),
            Predictor::Ntk(m) => m.dim(),
            Predictor::Mlp(m) => m.dim(),
        }
    }

    fn score(&self, x: &Vector) -> Result<f64> {
        match self {
            Predictor::Linear(m) => m.score(x),
            Predictor::Ntk(m) => m.score(x),
            Predictor::Mlp(m) => m.score(x),
        }
    }

    fn input_gradient(&self, x: &Vector) -> Result<Vector> {
        match self {
            Predictor::Linear(m) => m.input_gradient(x),
            Predictor::Ntk(m) => m.input_gradient(x),
            Predictor::Mlp(m) => m.input_gradient(x),
        }
    }
}

impl From<LinearModel> for Predictor {
    fn from(m: LinearModel) -> Self {
        Predictor::Linear(m)
    }
}

impl From<NtkModel> for Predictor {
    fn from(m: NtkModel) -> Self {
        Predictor::Ntk(m)
    }
}

impl From<MlpModel> for Predictor {
    fn from(m: MlpModel) -> Self {
        Predictor::Mlp(m)
    }
}
