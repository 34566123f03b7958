use crate::error::{check_dim, Result};
use crate::linalg::Vector;

use super::{Classifier, TrainTrace};

/// Bias-free linear scorer `f(x) = wᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Vector,
    pub trace: TrainTrace,
}

impl LinearModel {
    pub fn new(w: Vector) -> Self {
        Self {
            w,
            trace: TrainTrace::default(),
        }
    }

    pub fn with_trace(w: Vector, trace: TrainTrace) -> Self {
        Self { w, trace }
    }
}

impl Classifier for LinearModel {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn score(&self, x: &Vector) -> Result<f64> {
        check_dim(self.w.len(), x.len())?;
        Ok(self.w.dot(x))
    }

    fn input_gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.w.len(), x.len())?;
        Ok(self.w.clone())
    }
}
