//! Counterfactual search: SCFE (closed form and gradient based), Growing
//! Spheres and latent-space search through a VAE.

mod cchvae;
mod gsm;
mod scfe;

pub use cchvae::{cchvae_search, CchvaeParams};
pub use gsm::{gsm_search, GsmParams};
pub use scfe::{scfe_closed_form, scfe_search, ScfeParams};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::models::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Scfe,
    Gsm,
    Cchvae,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Scfe, Method::Gsm, Method::Cchvae];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Scfe => "SCFE",
            Method::Gsm => "GSM",
            Method::Cchvae => "CCHVAE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SCFE" => Ok(Method::Scfe),
            "GSM" => Ok(Method::Gsm),
            "CCHVAE" | "C-CHVAE" => Ok(Method::Cchvae),
            _ => Err(Error::Config(format!("unknown recourse method {s:?}"))),
        }
    }
}

/// Result of one recourse search.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseOutcome {
    pub x: Vector,
    /// Absent when the search found no candidate at all.
    pub x_cf: Option<Vector>,
    /// `‖x_cf − x‖₂` whenever `x_cf` is present.
    pub cost: Option<f64>,
    /// `label(x_cf) = +1`.
    pub valid: bool,
    pub method: Method,
    pub iterations: usize,
    pub budget_exhausted: bool,
    /// Latent radius of the successful C-CHVAE step.
    pub latent_radius: Option<f64>,
    /// SCFE penalty weight at which the returned point was produced.
    pub lambda: Option<f64>,
}

impl RecourseOutcome {
    pub(crate) fn found(
        x: &Vector,
        x_cf: Vector,
        valid: bool,
        method: Method,
        iterations: usize,
    ) -> Self {
        let cost = (&x_cf - x).norm();
        Self {
            x: x.clone(),
            x_cf: Some(x_cf),
            cost: Some(cost),
            valid,
            method,
            iterations,
            budget_exhausted: !valid,
            latent_radius: None,
            lambda: None,
        }
    }

    pub(crate) fn exhausted(x: &Vector, method: Method, iterations: usize) -> Self {
        Self {
            x: x.clone(),
            x_cf: None,
            cost: None,
            valid: false,
            method,
            iterations,
            budget_exhausted: true,
            latent_radius: None,
            lambda: None,
        }
    }

    /// Cost of a valid outcome, `None` otherwise.
    pub fn valid_cost(&self) -> Option<f64> {
        if self.valid {
            self.cost
        } else {
            None
        }
    }
}

pub(crate) fn require_negative<M: Classifier + ?Sized>(model: &M, x: &Vector) -> Result<()> {
    if model.label(x)? > 0.0 {
        Err(Error::AlreadyPositive)
    } else {
        Ok(())
    }
}
