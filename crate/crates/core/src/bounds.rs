//! Theoretical weight-gap, cost-difference and validity quantities, and
//! containment checks of empirical values against them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{spectral_norm, Matrix, Vector};
use crate::models::{Classifier, NtkModel};

/// Family of cost-difference interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// SCFE cost gap between two linear models.
    LinearScfe,
    /// SCFE cost gap between two NTK models.
    NtkScfe,
    /// C-CHVAE cost gap, driven by the decoder's Lipschitz constant.
    Cchvae,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::LinearScfe => "linear_scfe",
            BoundKind::NtkScfe => "ntk_scfe",
            BoundKind::Cchvae => "cchvae",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    LinearValidity,
    NtkValidity,
}

impl ConditionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionKind::LinearValidity => "linear_validity",
            ConditionKind::NtkValidity => "ntk_validity",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Symmetric interval `[−upper, upper]` around zero for `‖ζ_NR‖ − ‖ζ_R‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInterval {
    pub kind: BoundKind,
    pub lower: f64,
    pub upper: f64,
    pub empirical: f64,
    pub contained: bool,
    /// The interval's derivation does not apply; counted as contained.
    pub vacuous: bool,
}

impl BoundInterval {
    pub fn new(kind: BoundKind, upper: f64, empirical: f64) -> Self {
        Self {
            kind,
            lower: -upper,
            upper,
            empirical,
            contained: -upper <= empirical && empirical <= upper,
            vacuous: false,
        }
    }

    pub fn vacuous(kind: BoundKind, empirical: f64) -> Self {
        Self {
            kind,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            empirical,
            contained: true,
            vacuous: true,
        }
    }

    pub fn is_violation(&self) -> bool {
        !self.contained && !self.vacuous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityCondition {
    pub kind: ConditionKind,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ValidityCondition {
    pub fn new(kind: ConditionKind, lhs: f64, rhs: f64) -> Self {
        Self {
            kind,
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }
}

/// Upper bound `Δ = N·η·(‖x‖₂ + ε·√d)` on `‖w_NR − w_R‖₂` for linear models
/// trained from a shared start.
pub fn linear_weight_gap_bound(
    x: &Vector,
    epochs: usize,
    learning_rate: f64,
    epsilon: f64,
) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::param("epochs", "must be at least 1"));
    }
    if !(learning_rate > 0.0) {
        return Err(Error::param("learning_rate", "must be positive"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be non-negative"));
    }
    Ok(epochs as f64 * learning_rate * (x.norm() + epsilon * (x.len() as f64).sqrt()))
}

/// `upper = λ(2‖w_NR‖ + Δ) / (‖w_NR‖(‖w_NR‖ − Δ))`; vacuous when `‖w_NR‖ ≤ Δ`.
pub fn linear_scfe_cost_interval(
    w_nr: &Vector,
    delta: f64,
    lambda: f64,
    empirical: f64,
) -> Result<BoundInterval> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let wn = w_nr.norm();
    if wn == 0.0 {
        return Err(Error::ZeroWeights);
    }
    if wn <= delta {
        return Ok(BoundInterval::vacuous(BoundKind::LinearScfe, empirical));
    }
    let upper = lambda * (2.0 * wn + delta) / (wn * (wn - delta));
    Ok(BoundInterval::new(BoundKind::LinearScfe, upper, empirical))
}

/// `upper = 1/‖w̄_NR‖ + 1/‖w̄_R‖`, twice the reciprocal harmonic mean of the
/// effective-gradient norms; vacuous when either norm is zero.
pub fn ntk_cost_interval_from_norms(a: f64, b: f64, empirical: f64) -> BoundInterval {
    if !(a > 0.0 && b > 0.0) {
        return BoundInterval::vacuous(BoundKind::NtkScfe, empirical);
    }
    BoundInterval::new(BoundKind::NtkScfe, 1.0 / a + 1.0 / b, empirical)
}

/// As [`ntk_cost_interval_from_norms`] with `w̄ = ∇ₓK(x, X)·w` taken from each model at `x`.
pub fn ntk_scfe_cost_interval(
    nr: &NtkModel,
    r: &NtkModel,
    x: &Vector,
    empirical: f64,
) -> Result<BoundInterval> {
    let a = nr.input_gradient(x)?.norm();
    let b = r.input_gradient(x)?.norm();
    Ok(ntk_cost_interval_from_norms(a, b, empirical))
}

/// `upper = L_G·(r_R + r_NR)` with the latent radii recorded by the two searches.
pub fn latent_cost_interval(
    lipschitz: f64,
    r_nr: f64,
    r_r: f64,
    empirical: f64,
) -> Result<BoundInterval> {
    if !(lipschitz > 0.0) {
        return Err(Error::param("lipschitz", "must be positive"));
    }
    if !(r_nr > 0.0 && r_r > 0.0) {
        return Err(Error::param("latent_radius", "both radii must be positive"));
    }
    Ok(BoundInterval::new(
        BoundKind::Cchvae,
        lipschitz * (r_r + r_nr),
        empirical,
    ))
}

/// Weight gap between a non-robust and a robust NTK model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtkWeightGap {
    /// `‖(K(X,X)+βI)⁻¹ − (K(X_R,X_R)+βI)⁻¹‖₂` (spectral norm).
    pub delta_k: f64,
    pub y_norm: f64,
    pub weight_gap: f64,
    pub w_nr_norm: f64,
    pub w_r_norm: f64,
    /// `‖w_NR − w_R‖ ≤ Δ_K‖Y‖`.
    pub gap_holds: bool,
    /// `‖w_NR‖ − Δ_K‖Y‖ ≤ ‖w_R‖ ≤ ‖w_NR‖ + Δ_K‖Y‖`.
    pub sandwich_holds: bool,
}

fn require_compatible(nr: &NtkModel, r: &NtkModel) -> Result<()> {
    if nr.n_anchors() != r.n_anchors() || nr.anchors.ncols() != r.anchors.ncols() {
        return Err(Error::ModelMismatch(format!(
            "anchor sets differ in shape: {}x{} vs {}x{}",
            nr.anchors.nrows(),
            nr.anchors.ncols(),
            r.anchors.nrows(),
            r.anchors.ncols()
        )));
    }
    if nr.beta != r.beta {
        return Err(Error::ModelMismatch(format!(
            "beta differs: {} vs {}",
            nr.beta, r.beta
        )));
    }
    if nr.labels != r.labels {
        return Err(Error::ModelMismatch("label vectors differ".into()));
    }
    Ok(())
}

fn regularized_inverse(m: &NtkModel) -> Result<Matrix> {
    m.regularized_gram()?
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SolveFailed("K + βI is not positive definite".into()))
}

pub fn ntk_weight_gap(nr: &NtkModel, r: &NtkModel) -> Result<NtkWeightGap> {
    require_compatible(nr, r)?;
    let diff = regularized_inverse(nr)? - regularized_inverse(r)?;
    let delta_k = spectral_norm(&diff);
    let y_norm = nr.labels.norm();
    let weight_gap = (&nr.weights - &r.weights).norm();
    let w_nr_norm = nr.weights.norm();
    let w_r_norm = r.weights.norm();
    let slack = delta_k * y_norm;
    Ok(NtkWeightGap {
        delta_k,
        y_norm,
        weight_gap,
        w_nr_norm,
        w_r_norm,
        gap_holds: weight_gap <= slack,
        sandwich_holds: w_nr_norm - slack <= w_r_norm && w_r_norm <= w_nr_norm + slack,
    })
}

/// `|f_NR(x′_R) − f_NR(x′_NR)| ≤ Δ·‖x′_R‖₂` for linear models.
pub fn linear_validity_condition(
    w_nr: &Vector,
    delta: f64,
    cf_nr: &Vector,
    cf_r: &Vector,
) -> Result<ValidityCondition> {
    check_dim(w_nr.len(), cf_nr.len())?;
    check_dim(w_nr.len(), cf_r.len())?;
    let lhs = (w_nr.dot(cf_r) - w_nr.dot(cf_nr)).abs();
    Ok(ValidityCondition::new(
        ConditionKind::LinearValidity,
        lhs,
        delta * cf_r.norm(),
    ))
}

/// `|(k_R − k_NR)ᵀ w_NR| ≤ ‖k_R‖·Δ_K·‖Y‖` where `k_R = K(x′_R, X_R)` and `k_NR = K(x′_NR, X)`.
pub fn ntk_validity_from_parts(
    k_r: &Vector,
    k_nr: &Vector,
    w_nr: &Vector,
    delta_k: f64,
    y_norm: f64,
) -> Result<ValidityCondition> {
    check_dim(w_nr.len(), k_r.len())?;
    check_dim(w_nr.len(), k_nr.len())?;
    let lhs = (k_r - k_nr).dot(w_nr).abs();
    Ok(ValidityCondition::new(
        ConditionKind::NtkValidity,
        lhs,
        k_r.norm() * delta_k * y_norm,
    ))
}

/// Validity condition for an NTK pair given a precomputed [`ntk_weight_gap`].
pub fn ntk_validity_with_gap(
    nr: &NtkModel,
    r: &NtkModel,
    gap: &NtkWeightGap,
    cf_nr: &Vector,
    cf_r: &Vector,
) -> Result<ValidityCondition> {
    require_compatible(nr, r)?;
    ntk_validity_from_parts(
        &r.kernel_vector(cf_r)?,
        &nr.kernel_vector(cf_nr)?,
        &nr.weights,
        gap.delta_k,
        gap.y_norm,
    )
}

pub fn ntk_validity_condition(
    nr: &NtkModel,
    r: &NtkModel,
    cf_nr: &Vector,
    cf_r: &Vector,
) -> Result<ValidityCondition> {
    let gap = ntk_weight_gap(nr, r)?;
    ntk_validity_with_gap(nr, r, &gap, cf_nr, cf_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng_from_seed;
    use crate::models::ntk_fit;
    use proptest::prelude::*;
    use rand::Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn weight_gap_reference_values() {
        assert!(
            (linear_weight_gap_bound(&v(&[3.0, 4.0]), 1, 0.1, 0.0).unwrap() - 0.5).abs() < 1e-15
        );
        let x = v(&[0.5, 0.5, 0.5, 0.5]);
        assert!((linear_weight_gap_bound(&x, 10, 0.01, 0.1).unwrap() - 0.12).abs() < 1e-15);
        assert!(linear_weight_gap_bound(&x, 0, 0.01, 0.1).is_err());
    }

    #[test]
    fn linear_interval_reference_values() {
        let w = v(&[3.0, 4.0]);
        let b = linear_scfe_cost_interval(&w, 1.0, 0.5, 0.1).unwrap();
        assert!((b.upper - 0.275).abs() < 1e-15);
        assert_eq!(b.lower, -b.upper);
        assert!(b.contained && !b.vacuous);
        let b = linear_scfe_cost_interval(&w, 5.0, 0.5, 100.0).unwrap();
        assert!(b.vacuous && b.contained && !b.is_violation());
        let b = linear_scfe_cost_interval(&w, 1.0, 0.5, 0.3).unwrap();
        assert!(b.is_violation());
    }

    #[test]
    fn ntk_interval_reference_values() {
        assert_eq!(ntk_cost_interval_from_norms(2.0, 2.0, 0.0).upper, 1.0);
        assert!((ntk_cost_interval_from_norms(1.0, 3.0, 0.0).upper - 4.0 / 3.0).abs() < 1e-15);
        assert!(ntk_cost_interval_from_norms(0.0, 3.0, 0.0).vacuous);
    }

    #[test]
    fn latent_interval_reference_values() {
        let b = latent_cost_interval(1.5, 0.1, 0.2, 0.3).unwrap();
        assert!((b.upper - 0.45).abs() < 1e-15);
        assert!(latent_cost_interval(1.5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn scalar_weight_gap() {
        // K(x, x) = ‖x‖²/2: anchors (1, 0) and (√0.6, 0) give 0.5 and 0.3.
        let y = v(&[1.0]);
        let nr = ntk_fit(&Matrix::from_row_slice(1, 2, &[1.0, 0.0]), &y, 0.5).unwrap();
        let r = ntk_fit(
            &Matrix::from_row_slice(1, 2, &[0.6f64.sqrt(), 0.0]),
            &y,
            0.5,
        )
        .unwrap();
        let gap = ntk_weight_gap(&nr, &r).unwrap();
        assert!((gap.delta_k - 0.25).abs() < 1e-12);
        assert!(gap.gap_holds && gap.sandwich_holds);

        let c =
            ntk_validity_condition(&nr, &r, &v(&[1.0, 0.0]), &v(&[0.6f64.sqrt(), 0.0])).unwrap();
        assert!((c.lhs - 0.2).abs() < 1e-12);
        assert!((c.rhs - 0.075).abs() < 1e-12);
        assert!(!c.holds);

        let c = ntk_validity_from_parts(&v(&[0.3]), &v(&[0.5]), &v(&[1.0]), 0.25, 1.0).unwrap();
        assert!((c.lhs - 0.2).abs() < 1e-15 && (c.rhs - 0.075).abs() < 1e-15 && !c.holds);
    }

    fn random_anchors(n: usize, d: usize, seed: u64) -> (Matrix, Vector) {
        let mut rng = rng_from_seed(seed);
        let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = Vector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        (x, y)
    }

    #[test]
    fn identical_models_have_zero_gap() {
        let (x, y) = random_anchors(8, 3, 1);
        let m = ntk_fit(&x, &y, 0.5).unwrap();
        let gap = ntk_weight_gap(&m, &m).unwrap();
        assert_eq!(gap.delta_k, 0.0);
        assert_eq!(gap.weight_gap, 0.0);
        let cf = v(&[0.2, -0.4, 0.9]);
        let c = ntk_validity_condition(&m, &m, &cf, &cf).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (0.0, 0.0, true));
    }

    #[test]
    fn random_gap_matches_svd() {
        let (x, y) = random_anchors(20, 4, 2);
        let mut rng = rng_from_seed(3);
        let xr = x.map(|v| v + rng.random_range(-0.1..0.1));
        let nr = ntk_fit(&x, &y, 0.5).unwrap();
        let r = ntk_fit(&xr, &y, 0.5).unwrap();
        let gap = ntk_weight_gap(&nr, &r).unwrap();
        let inv = |m: &NtkModel| m.regularized_gram().unwrap().lu().try_inverse().unwrap();
        let oracle = (inv(&nr) - inv(&r)).singular_values().max();
        assert!(((gap.delta_k - oracle) / oracle).abs() < 1e-8);
        assert!(gap.gap_holds && gap.sandwich_holds);
    }

    #[test]
    fn mismatched_models_rejected() {
        let (x, y) = random_anchors(6, 2, 4);
        let a = ntk_fit(&x, &y, 0.5).unwrap();
        let b = ntk_fit(&x, &y, 0.6).unwrap();
        assert!(matches!(
            ntk_weight_gap(&a, &b),
            Err(Error::ModelMismatch(_))
        ));
        let (x2, y2) = random_anchors(5, 2, 4);
        let c = ntk_fit(&x2, &y2, 0.5).unwrap();
        assert!(ntk_weight_gap(&a, &c).is_err());
    }

    #[test]
    fn linear_condition_reference_values() {
        let c = linear_validity_condition(&v(&[1.0, 0.0]), 0.5, &v(&[1.0, 0.0]), &v(&[2.0, 0.0]))
            .unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (1.0, 1.0, true));
        let c = linear_validity_condition(&v(&[1.0, 0.0]), 0.5, &v(&[1.0, 3.0]), &v(&[1.0, 3.0]))
            .unwrap();
        assert!(c.lhs == 0.0 && c.holds);
    }

    proptest! {
        #[test]
        fn weight_gap_increases_in_each_argument(n in 1usize..50, lr in 0.001f64..1.0, eps in 0.0f64..1.0, s in 0.1f64..5.0) {
            let x = v(&[s, 0.5 * s]);
            let base = linear_weight_gap_bound(&x, n, lr, eps).unwrap();
            prop_assert!(linear_weight_gap_bound(&x, n + 1, lr, eps).unwrap() > base);
            prop_assert!(linear_weight_gap_bound(&x, n, lr * 1.1, eps).unwrap() > base);
            prop_assert!(linear_weight_gap_bound(&x, n, lr, eps + 0.01).unwrap() > base);
            prop_assert!(linear_weight_gap_bound(&(&x * 1.1), n, lr, eps).unwrap() > base);
        }

        #[test]
        fn linear_upper_increases_in_delta(wn in 0.5f64..10.0, frac in 0.0f64..0.98, lambda in 0.01f64..5.0) {
            let w = v(&[wn, 0.0]);
            let d1 = frac * wn;
            let d2 = (frac + 0.01) * wn;
            let a = linear_scfe_cost_interval(&w, d1, lambda, 0.0).unwrap();
            let b = linear_scfe_cost_interval(&w, d2, lambda, 0.0).unwrap();
            prop_assert!(b.upper > a.upper);
            prop_assert_eq!(a.lower, -a.upper);
        }

        #[test]
        fn ntk_upper_is_reciprocal_sum(a in 0.01f64..10.0, b in 0.01f64..10.0) {
            let i = ntk_cost_interval_from_norms(a, b, 0.0);
            prop_assert_eq!(i.upper, 1.0 / a + 1.0 / b);
            let h = 2.0 * a * b / (a + b);
            prop_assert!((i.upper - 2.0 / h).abs() <= 1e-12 * i.upper);
        }
    }
}
