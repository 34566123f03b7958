//! Closed-form two-layer ReLU neural tangent kernel and kernel ridge fit.
//!
//! `K(a, b) = aᵀb · (π − arccos(aᵀb / (‖a‖‖b‖))) / (2π)`
//!
//! The prediction of an NTK model is `f(x) = K(x, X)ᵀ w` with
//! `w = (K(X, X) + βI)⁻¹ Y`.

use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{row, Matrix, Vector};

use super::Classifier;

/// Cosine clamp used by the analytic gradient; `arccos` is singular at `±1`.
pub const COS_CLAMP: f64 = 1.0 - 1e-12;

pub fn ntk_kernel(xi: &Vector, xj: &Vector) -> Result<f64> {
    check_dim(xi.len(), xj.len())?;
    let ni = xi.norm();
    let nj = xj.norm();
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::ZeroNormInput);
    }
    let dot = xi.dot(xj);
    let cos = (dot / (ni * nj)).clamp(-1.0, 1.0);
    Ok(dot * (PI - cos.acos()) / (2.0 * PI))
}

/// `∇ₓ K(x, xj)`.
pub fn ntk_kernel_gradient(x: &Vector, xj: &Vector) -> Result<Vector> {
    check_dim(x.len(), xj.len())?;
    let nx = x.norm();
    let nj = xj.norm();
    if nx == 0.0 || nj == 0.0 {
        return Err(Error::ZeroNormInput);
    }
    let dot = x.dot(xj);
    let cos = (dot / (nx * nj)).clamp(-COS_CLAMP, COS_CLAMP);
    // d cos / dx = xj/(‖x‖‖xj‖) − cos·x/‖x‖²
    let dcos = xj / (nx * nj) - x * (cos / (nx * nx));
    let angle_term = (PI - cos.acos()) / (2.0 * PI);
    let darccos = dot / (2.0 * PI) / (1.0 - cos * cos).sqrt();
    Ok(xj * angle_term + dcos * darccos)
}

/// `K(A, B)` with `A` `m × d` and `B` `n × d`.
pub fn ntk_kernel_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_dim(a.ncols(), b.ncols())?;
    let rows_a: Vec<Vector> = (0..a.nrows()).map(|i| row(a, i)).collect();
    let rows_b: Vec<Vector> = (0..b.nrows()).map(|i| row(b, i)).collect();
    let mut k = Matrix::zeros(a.nrows(), b.nrows());
    for (i, ai) in rows_a.iter().enumerate() {
        for (j, bj) in rows_b.iter().enumerate() {
            k[(i, j)] = ntk_kernel(ai, bj)?;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkModel {
    /// `n × d` anchor points (perturbed for robust models).
    pub anchors: Matrix,
    pub weights: Vector,
    /// Training labels `Y` the weights were solved against.
    pub labels: Vector,
    pub beta: f64,
    pub epsilon: f64,
}

impl NtkModel {
    pub fn n_anchors(&self) -> usize {
        self.anchors.nrows()
    }

    /// `K(x, X)`: kernel values of `x` against every anchor.
    pub fn kernel_vector(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.anchors.ncols(), x.len())?;
        let mut k = Vector::zeros(self.n_anchors());
        for i in 0..self.n_anchors() {
            k[i] = ntk_kernel(x, &row(&self.anchors, i))?;
        }
        Ok(k)
    }

    /// `(K(X, X) + βI)`.
    pub fn regularized_gram(&self) -> Result<Matrix> {
        let mut k = ntk_kernel_matrix(&self.anchors, &self.anchors)?;
        for i in 0..k.nrows() {
            k[(i, i)] += self.beta;
        }
        Ok(k)
    }
}

impl Classifier for NtkModel {
    fn dim(&self) -> usize {
        self.anchors.ncols()
    }

    fn score(&self, x: &Vector) -> Result<f64> {
        Ok(self.kernel_vector(x)?.dot(&self.weights))
    }

    /// `∇ₓ K(x, X) w`, the effective linear weight at `x`.
    fn input_gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.anchors.ncols(), x.len())?;
        let mut g = Vector::zeros(x.len());
        for i in 0..self.n_anchors() {
            g += ntk_kernel_gradient(x, &row(&self.anchors, i))? * self.weights[i];
        }
        Ok(g)
    }
}

/// Kernel ridge fit `w = (K(X, X) + βI)⁻¹ Y`.
pub fn ntk_fit(anchors: &Matrix, labels: &Vector, beta: f64) -> Result<NtkModel> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", "must be positive"));
    }
    check_dim(anchors.nrows(), labels.len())?;
    for i in 0..anchors.nrows() {
        if anchors.row(i).norm() == 0.0 {
            return Err(Error::ZeroNormInput);
        }
    }
    let mut model = NtkModel {
        anchors: anchors.clone(),
        weights: Vector::zeros(labels.len()),
        labels: labels.clone(),
        beta,
        epsilon: 0.0,
    };
    let gram = model.regularized_gram()?;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolveFailed("K + βI is not positive definite".into()))?;
    let mut w = chol.solve(labels);
    // One step of iterative refinement keeps the residual near machine precision.
    let resid = labels - &gram * &w;
    w += chol.solve(&resid);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailed("non-finite NTK weights".into()));
    }
    model.weights = w;
    Ok(model)
}
