//! T-learner with a linear outcome model per arm: fit ordinary least
//! squares with an intercept separately on treated and control records,
//! and report the difference of the two fitted surfaces.

use nalgebra::{DMatrix, DVector};

use crate::cate::{CateError, CatePrediction, SIGMA_FLOOR};
use crate::data::ParticipantRecord;

const RIDGE: f64 = 1e-6;

#[derive(Clone, Debug)]
struct ArmFit {
    beta: DVector<f64>,
    xtx_inv: DMatrix<f64>,
    s2: f64,
}

#[derive(Clone, Debug)]
pub struct LinearTModel {
    treated: ArmFit,
    control: ArmFit,
    dim: usize,
    ridged: bool,
}

fn design_row(x: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(x.len() + 1);
    row.push(1.0);
    row.extend_from_slice(x);
    row
}

fn fit_arm(records: &[&ParticipantRecord], arm: &'static str) -> Result<(ArmFit, bool), CateError> {
    let n = records.len();
    let p = records.first().map_or(1, |r| r.covariates.len() + 1);
    if n < p {
        return Err(CateError::TooFewForRegression { arm, needed: p, got: n });
    }
    let rows: Vec<f64> = records.iter().flat_map(|r| design_row(&r.covariates)).collect();
    let x = DMatrix::from_row_slice(n, p, &rows);
    let y = DVector::from_iterator(n, records.iter().map(|r| r.y()));
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let (chol, ridged) = match xtx.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let mut reg = xtx;
            for i in 0..p {
                reg[(i, i)] += RIDGE;
            }
            match reg.cholesky() {
                Some(c) => (c, true),
                None => {
                    return Err(CateError::InsufficientData(format!(
                        "singular design matrix in the {arm} arm"
                    )))
                }
            }
        }
    };
    let beta = chol.solve(&xty);
    let xtx_inv = chol.inverse();
    let resid = &y - &x * &beta;
    let dof = n.saturating_sub(p);
    let s2 = if dof == 0 { 0.0 } else { resid.norm_squared() / dof as f64 };
    Ok((ArmFit { beta, xtx_inv, s2 }, ridged))
}

/// Fits the two per-arm regressions. Requires at least dim + 1 records in
/// each arm; a rank-deficient design falls back to a tiny ridge penalty
/// and marks every prediction as a fallback.
pub fn fit_linear_t_learner(train: &[&ParticipantRecord]) -> Result<LinearTModel, CateError> {
    if train.is_empty() {
        return Err(CateError::EmptyTrain);
    }
    let treated: Vec<&ParticipantRecord> = train.iter().copied().filter(|r| r.treatment).collect();
    let control: Vec<&ParticipantRecord> = train.iter().copied().filter(|r| !r.treatment).collect();
    if treated.is_empty() {
        return Err(CateError::MissingArm("treated"));
    }
    if control.is_empty() {
        return Err(CateError::MissingArm("control"));
    }
    let dim = train[0].covariates.len();
    let (t_fit, t_ridged) = fit_arm(&treated, "treated")?;
    let (c_fit, c_ridged) = fit_arm(&control, "control")?;
    Ok(LinearTModel { treated: t_fit, control: c_fit, dim, ridged: t_ridged || c_ridged })
}

impl LinearTModel {
    pub fn predict(&self, x: &[f64]) -> CatePrediction {
        assert_eq!(x.len(), self.dim, "covariate arity mismatch");
        let row = DVector::from_vec(design_row(x));
        let tau_hat = row.dot(&self.treated.beta) - row.dot(&self.control.beta);
        // Prediction variance of each arm's mean surface at x, summed.
        let var = self.treated.s2 * (row.transpose() * &self.treated.xtx_inv * &row)[(0, 0)]
            + self.control.s2 * (row.transpose() * &self.control.xtx_inv * &row)[(0, 0)];
        CatePrediction {
            tau_hat,
            sigma_hat: var.max(0.0).sqrt().max(SIGMA_FLOOR),
            fallback: self.ridged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Outcome;

    fn rec(id: u64, d: bool, x: Vec<f64>, y: f64) -> ParticipantRecord {
        ParticipantRecord {
            id,
            arrival: id as f64,
            treatment: d,
            covariates: x,
            outcome: Outcome::Gaussian { y },
            true_group: None,
            true_cate: None,
        }
    }

    #[test]
    fn noiseless_linear_signal_is_recovered_exactly() {
        // y = 1 + 2 x1 - x2 in control, effect = x1, no noise
        let mut recs = Vec::new();
        let xs = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [2.0, 1.0],
            [1.0, 2.0],
        ];
        let mut id = 0;
        for &[a, b] in &xs {
            let base = 1.0 + 2.0 * a - b;
            recs.push(rec(id, false, vec![a, b], base));
            recs.push(rec(id + 1, true, vec![a, b], base + a));
            id += 2;
        }
        let refs: Vec<&ParticipantRecord> = recs.iter().collect();
        let model = fit_linear_t_learner(&refs).unwrap();
        for &[a, b] in &xs {
            let p = model.predict(&[a, b]);
            assert!((p.tau_hat - a).abs() < 1e-8, "tau at ({a},{b}) = {}", p.tau_hat);
        }
        let p = model.predict(&[3.0, 0.5]);
        assert!((p.tau_hat - 3.0).abs() < 1e-8);
    }

    #[test]
    fn underdetermined_arm_is_rejected() {
        let recs = vec![
            rec(0, true, vec![1.0, 2.0], 1.0),
            rec(1, true, vec![2.0, 1.0], 2.0),
            rec(2, true, vec![0.0, 1.0], 0.5),
            rec(3, false, vec![1.0, 1.0], 0.0),
        ];
        let refs: Vec<&ParticipantRecord> = recs.iter().collect();
        assert!(matches!(
            fit_linear_t_learner(&refs),
            Err(CateError::TooFewForRegression { arm: "control", needed: 3, got: 1 })
        ));
    }

    #[test]
    fn collinear_design_uses_ridge_and_flags_fallback() {
        // x2 = 2 x1 everywhere, so X'X is singular without regularization.
        let recs: Vec<ParticipantRecord> = (0..12)
            .map(|i| {
                let v = (i % 3) as f64;
                rec(i, i % 2 == 0, vec![v, 2.0 * v], v)
            })
            .collect();
        let refs: Vec<&ParticipantRecord> = recs.iter().collect();
        let model = fit_linear_t_learner(&refs).unwrap();
        let p = model.predict(&[1.0, 2.0]);
        assert!(p.fallback);
        assert!(p.tau_hat.is_finite());
        assert!(p.sigma_hat >= SIGMA_FLOOR);
    }

    #[test]
    fn noisy_fit_reports_positive_uncertainty() {
        let recs: Vec<ParticipantRecord> = (0..30)
            .map(|i| {
                let x = (i % 5) as f64;
                let noise = if i % 3 == 0 { 0.3 } else { -0.15 };
                rec(i, i % 2 == 0, vec![x], x + noise)
            })
            .collect();
        let refs: Vec<&ParticipantRecord> = recs.iter().collect();
        let model = fit_linear_t_learner(&refs).unwrap();
        let p = model.predict(&[2.0]);
        assert!(p.sigma_hat > SIGMA_FLOOR);
        // Extrapolation is less certain than interpolation.
        let far = model.predict(&[10.0]);
        assert!(far.sigma_hat > p.sigma_hat);
    }
}
