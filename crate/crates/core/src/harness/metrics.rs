use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::recourse::RecourseOutcome;
use crate::training::fgsm_perturb;

/// Mean ‖x − x′‖₂ over valid outcomes; `None` when nothing is valid.
pub fn metric_cost(outcomes: &[RecourseOutcome]) -> Option<f64> {
    let costs: Vec<f64> = outcomes
        .iter()
        .filter_map(RecourseOutcome::valid_cost)
        .collect();
    if costs.is_empty() {
        None
    } else {
        Some(costs.iter().sum::<f64>() / costs.len() as f64)
    }
}

/// Fraction of attempted recourses that reached the positive label.
pub fn metric_validity(outcomes: &[RecourseOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::param(
            "outcomes",
            "validity of an empty attempt list is undefined",
        ));
    }
    Ok(outcomes.iter().filter(|o| o.valid).count() as f64 / outcomes.len() as f64)
}

/// Accuracy on FGSM-perturbed inputs of radius `epsilon`.
pub fn adversarial_accuracy<M: Classifier + ?Sized>(
    model: &M,
    ds: &Dataset,
    epsilon: f64,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let adv = fgsm_perturb(model, &ds.x, &ds.y, epsilon)?;
    let mut correct = 0;
    for i in 0..ds.len() {
        let x = adv.row(i).transpose();
        if model.label(&x)? == ds.y[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// True when `values` is monotone in the requested direction up to at most
/// one inversion whose magnitude is at most `tolerance`.
pub fn monotone_with_tolerance(values: &[f64], non_increasing: bool, tolerance: f64) -> bool {
    let mut inversions = 0;
    for w in values.windows(2) {
        let step = if non_increasing {
            w[1] - w[0]
        } else {
            w[0] - w[1]
        };
        if step > 0.0 {
            if step > tolerance {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, Vector};
    use crate::models::LinearModel;
    use crate::recourse::Method;

    fn outcome(valid: bool, cost: f64) -> RecourseOutcome {
        let x = Vector::zeros(1);
        if valid || cost > 0.0 {
            let mut o =
                RecourseOutcome::found(&x, Vector::from_element(1, cost), valid, Method::Gsm, 1);
            o.valid = valid;
            o
        } else {
            RecourseOutcome::exhausted(&x, Method::Gsm, 1)
        }
    }

    #[test]
    fn cost_is_mean_over_valid() {
        assert_eq!(
            metric_cost(&[outcome(true, 1.0), outcome(true, 3.0)]),
            Some(2.0)
        );
        assert_eq!(metric_cost(&[outcome(false, 0.0)]), None);
        assert_eq!(
            metric_cost(&[outcome(true, 1.0), outcome(false, 9.0), outcome(true, 3.0)]),
            Some(2.0)
        );
    }

    #[test]
    fn validity_ratios() {
        let mut v: Vec<_> = (0..7).map(|_| outcome(true, 1.0)).collect();
        v.extend((0..3).map(|_| outcome(false, 0.0)));
        assert_eq!(metric_validity(&v).unwrap(), 0.7);
        assert_eq!(metric_validity(&v[7..]).unwrap(), 0.0);
        assert_eq!(metric_validity(&v[..7]).unwrap(), 1.0);
        assert!(metric_validity(&[]).is_err());
    }

    #[test]
    fn adversarial_accuracy_edge_cases() {
        let ds = Dataset::new(
            Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.05, 1.0, -1.0, 0.0, -0.05, 2.0]),
            Vector::from_vec(vec![1.0, 1.0, -1.0, -1.0]),
        )
        .unwrap();
        let m = LinearModel::new(Vector::from_vec(vec![1.0, 0.0]));
        assert_eq!(adversarial_accuracy(&m, &ds, 0.0).unwrap(), 1.0);
        assert_eq!(adversarial_accuracy(&m, &ds, 0.1).unwrap(), 0.5);
        let constant = LinearModel::new(Vector::zeros(2));
        for eps in [0.0, 0.1, 1.0] {
            assert_eq!(adversarial_accuracy(&constant, &ds, eps).unwrap(), 0.5);
        }
    }

    #[test]
    fn monotonicity_tolerance() {
        assert!(monotone_with_tolerance(&[1.0, 0.9, 0.5], true, 0.02));
        assert!(monotone_with_tolerance(&[1.0, 0.9, 0.91, 0.5], true, 0.02));
        assert!(!monotone_with_tolerance(&[1.0, 0.9, 0.95, 0.5], true, 0.02));
        assert!(!monotone_with_tolerance(
            &[1.0, 1.01, 0.9, 0.91],
            true,
            0.02
        ));
        assert!(monotone_with_tolerance(&[0.0, 0.2, 0.19, 0.5], false, 0.02));
    }
}
