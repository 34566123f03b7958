use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rng_from_seed, sample_in_ball, sample_in_shell, Vector};
use crate::models::Classifier;

use super::{require_negative, Method, RecourseOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsmParams {
    pub initial_radius: f64,
    pub growth: f64,
    pub samples_per_shell: usize,
    pub max_shells: usize,
    /// Weight of the ℓ0 term; any positive value enables the greedy coordinate reset.
    pub sparsity_weight: f64,
    pub seed: u64,
}

impl Default for GsmParams {
    fn default() -> Self {
        Self {
            initial_radius: 0.5,
            growth: 1.2,
            samples_per_shell: 500,
            max_shells: 40,
            sparsity_weight: 0.0,
            seed: 0,
        }
    }
}

impl GsmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_radius > 0.0) {
            return Err(Error::param("initial_radius", "must be positive"));
        }
        if !(self.growth > 1.0) {
            return Err(Error::param("growth", "must exceed 1"));
        }
        if self.samples_per_shell == 0 || self.max_shells == 0 {
            return Err(Error::param(
                "samples_per_shell",
                "sample and shell counts must be at least 1",
            ));
        }
        if !(self.sparsity_weight >= 0.0) {
            return Err(Error::param("sparsity_weight", "must be non-negative"));
        }
        Ok(())
    }
}

struct Best {
    point: Option<Vector>,
    cost: f64,
}

impl Best {
    fn offer(&mut self, x: &Vector, cand: Vector) {
        let c = (&cand - x).norm();
        if c < self.cost {
            self.cost = c;
            self.point = Some(cand);
        }
    }
}

/// Growing Spheres.
///
/// Phase 1 samples the ball of radius `r` and divides `r` by `growth` for as
/// long as a positive point turns up (at most `max_shells` times). Phase 2
/// then samples the shells `[r, r·growth]`, `[r·growth, r·growth²]`, … until a
/// shell contains a positive point; `iterations` counts these phase-2 shells.
/// The cheapest positive sample seen in either phase is returned.
pub fn gsm_search<M: Classifier + ?Sized>(
    model: &M,
    x: &Vector,
    p: &GsmParams,
) -> Result<RecourseOutcome> {
    p.validate()?;
    require_negative(model, x)?;
    let d = x.len();
    let mut rng = rng_from_seed(p.seed);
    let mut best = Best {
        point: None,
        cost: f64::INFINITY,
    };
    let sample = |best: &mut Best, lo: f64, hi: f64, rng: &mut _| -> Result<bool> {
        let mut hit = false;
        for _ in 0..p.samples_per_shell {
            let cand = x + if lo == 0.0 {
                sample_in_ball(rng, d, hi)
            } else {
                sample_in_shell(rng, d, lo, hi)
            };
            if model.label(&cand)? > 0.0 {
                hit = true;
                best.offer(x, cand);
            }
        }
        Ok(hit)
    };

    let mut r = p.initial_radius;
    let mut shrinks = 0;
    while shrinks < p.max_shells && sample(&mut best, 0.0, r, &mut rng)? {
        r /= p.growth;
        shrinks += 1;
    }

    let mut iterations = 0;
    let mut lo = r;
    while iterations < p.max_shells {
        iterations += 1;
        let hi = lo * p.growth;
        if sample(&mut best, lo, hi, &mut rng)? {
            break;
        }
        lo = hi;
    }

    match best.point {
        Some(mut cf) => {
            if p.sparsity_weight > 0.0 {
                sparsify(model, x, &mut cf)?;
            }
            Ok(RecourseOutcome::found(x, cf, true, Method::Gsm, iterations))
        }
        None => Ok(RecourseOutcome::exhausted(x, Method::Gsm, iterations)),
    }
}

/// Resets coordinates to their original value, smallest change first, while the label stays positive.
fn sparsify<M: Classifier + ?Sized>(model: &M, x: &Vector, cf: &mut Vector) -> Result<()> {
    let mut order: Vec<usize> = (0..x.len()).filter(|&j| cf[j] != x[j]).collect();
    order.sort_by(|&a, &b| {
        (cf[a] - x[a])
            .abs()
            .total_cmp(&(cf[b] - x[b]).abs())
            .then(a.cmp(&b))
    });
    for j in order {
        let kept = cf[j];
        cf[j] = x[j];
        if model.label(cf)? <= 0.0 {
            cf[j] = kept;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearModel;

    /// Positive everywhere except within 1e-9 of the origin.
    struct AlmostEverywherePositive;

    impl Classifier for AlmostEverywherePositive {
        fn dim(&self) -> usize {
            2
        }
        fn score(&self, x: &Vector) -> Result<f64> {
            Ok(if x.norm() < 1e-9 { -1.0 } else { 1.0 })
        }
        fn input_gradient(&self, _: &Vector) -> Result<Vector> {
            Ok(Vector::zeros(2))
        }
    }

    fn halfspace() -> LinearModel {
        LinearModel::new(Vector::from_vec(vec![1.0, 0.0]))
    }

    #[test]
    fn halfspace_cost_within_one_growth_factor() {
        let x = Vector::from_vec(vec![-1.0, 0.0]);
        let mut inside = 0;
        for seed in 0..100 {
            let p = GsmParams {
                seed,
                ..Default::default()
            };
            let o = gsm_search(&halfspace(), &x, &p).unwrap();
            let c = o.cost.unwrap();
            if o.valid && (1.0..=1.2).contains(&c) {
                inside += 1;
            }
        }
        assert!(inside >= 99, "{inside}/100");
    }

    #[test]
    fn first_shell_succeeds_when_everything_is_positive() {
        let o = gsm_search(
            &AlmostEverywherePositive,
            &Vector::zeros(2),
            &GsmParams::default(),
        )
        .unwrap();
        assert!(o.valid);
        assert_eq!(o.iterations, 1);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let x = Vector::from_vec(vec![-0.7, 0.3]);
        let p = GsmParams::default();
        assert_eq!(
            gsm_search(&halfspace(), &x, &p).unwrap(),
            gsm_search(&halfspace(), &x, &p).unwrap()
        );
    }

    #[test]
    fn exhaustion_is_flagged() {
        let x = Vector::from_vec(vec![-100.0, 0.0]);
        let p = GsmParams {
            max_shells: 3,
            samples_per_shell: 20,
            ..Default::default()
        };
        let o = gsm_search(&halfspace(), &x, &p).unwrap();
        assert!(o.budget_exhausted && !o.valid && o.x_cf.is_none());
        assert_eq!(o.iterations, 3);
    }

    #[test]
    fn sparsity_resets_irrelevant_coordinates() {
        let x = Vector::from_vec(vec![-1.0, 0.0, 0.0]);
        let m = LinearModel::new(Vector::from_vec(vec![1.0, 0.0, 0.0]));
        let p = GsmParams {
            sparsity_weight: 1.0,
            ..Default::default()
        };
        let o = gsm_search(&m, &x, &p).unwrap();
        let cf = o.x_cf.unwrap();
        assert!(o.valid && m.label(&cf).unwrap() > 0.0);
        assert_eq!((cf[1], cf[2]), (0.0, 0.0));
    }

    #[test]
    fn rejects_positive_instance_and_bad_params() {
        assert!(gsm_search(
            &halfspace(),
            &Vector::from_vec(vec![1.0, 0.0]),
            &GsmParams::default()
        )
        .is_err());
        let p = GsmParams {
            growth: 1.0,
            ..Default::default()
        };
        assert!(gsm_search(&halfspace(), &Vector::from_vec(vec![-1.0, 0.0]), &p).is_err());
    }
}
