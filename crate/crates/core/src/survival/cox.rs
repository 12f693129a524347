//! Weighted Cox regression on a single binary covariate (the treatment
//! indicator) with Breslow tie handling. The partial likelihood is concave
//! in the scalar coefficient, so a safeguarded Newton iteration suffices.

use crate::data::{CheckpointView, OutcomeKind};
use crate::survival::SurvivalError;

/// Absolute cap on the fitted log hazard ratio. A monotone likelihood
/// (all events in one arm) walks to infinity; capping keeps the monitor
/// alive and flags the fit as unconverged.
const BETA_CAP: f64 = 10.0;
const SCORE_TOL: f64 = 1e-9;
const MAX_ITER: usize = 60;
const MAX_STEP: f64 = 2.0;

#[derive(Clone, Copy, Debug)]
pub struct CoxFit {
    /// Coefficient of the treatment indicator: positive means treatment
    /// raises the event hazard.
    pub log_hr: f64,
    pub se: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Row {
    duration: f64,
    event: bool,
    treated: bool,
    weight: f64,
}

fn rows(view: &CheckpointView, weights: &[f64]) -> Result<Vec<Row>, SurvivalError> {
    if view.outcome_kind != OutcomeKind::Tte {
        return Err(SurvivalError::NotTte);
    }
    assert_eq!(weights.len(), view.records.len(), "weights must align with the view");
    let mut out: Vec<Row> = view
        .records
        .iter()
        .zip(weights)
        .filter(|&(_, &w)| w > 0.0)
        .map(|(r, &w)| {
            let (duration, event) = r.tte();
            Row { duration, event, treated: r.treatment, weight: w }
        })
        .collect();
    // Descending by duration so a single sweep accumulates risk sets.
    out.sort_by(|a, b| b.duration.total_cmp(&a.duration));
    Ok(out)
}

// Score and observed information of the weighted Breslow partial
// log-likelihood at beta, plus the weighted event count.
fn score_info(rows: &[Row], beta: f64) -> (f64, f64, f64) {
    let ebeta = beta.exp();
    let mut at_risk_control = 0.0f64;
    let mut at_risk_treated = 0.0f64;
    let mut score = 0.0;
    let mut info = 0.0;
    let mut events = 0.0;
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].duration;
        let mut j = i;
        while j < rows.len() && rows[j].duration == t {
            let r = &rows[j];
            if r.treated {
                at_risk_treated += r.weight;
            } else {
                at_risk_control += r.weight;
            }
            j += 1;
        }
        for r in &rows[i..j] {
            if !r.event {
                continue;
            }
            let denom = at_risk_control + ebeta * at_risk_treated;
            if denom <= 0.0 {
                continue;
            }
            let p = ebeta * at_risk_treated / denom;
            score += r.weight * (f64::from(u8::from(r.treated)) - p);
            info += r.weight * p * (1.0 - p);
            events += r.weight;
        }
        i = j;
    }
    (score, info, events)
}

/// Maximizes the weighted partial likelihood. Records with zero weight are
/// ignored entirely; an event-free view is an error the caller is expected
/// to turn into a continue decision.
pub fn cox_fit(view: &CheckpointView, weights: &[f64]) -> Result<CoxFit, SurvivalError> {
    let rows = rows(view, weights)?;
    let (_, _, events) = score_info(&rows, 0.0);
    if events <= 0.0 {
        return Err(SurvivalError::NoEvents);
    }
    let mut beta = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let (score, info, _) = score_info(&rows, beta);
        if score.abs() < SCORE_TOL {
            converged = true;
            break;
        }
        let step = if info > 1e-12 {
            (score / info).clamp(-MAX_STEP, MAX_STEP)
        } else {
            // flat information: walk toward the score direction
            MAX_STEP.copysign(score)
        };
        beta += step;
        if beta.abs() >= BETA_CAP {
            beta = BETA_CAP.copysign(beta);
            break;
        }
    }
    let (_, info_hat, _) = score_info(&rows, beta);
    let se = if info_hat > 0.0 { 1.0 / info_hat.sqrt() } else { f64::INFINITY };
    Ok(CoxFit { log_hr: beta, se, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Checkpoint, ExperimentDataset, Outcome, ParticipantRecord, RecruitmentModel};

    fn tte_view(rows: &[(f64, bool, bool)]) -> CheckpointView {
        let records: Vec<ParticipantRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(time, event, treated))| ParticipantRecord {
                id: i as u64,
                arrival: 0.0,
                treatment: treated,
                covariates: vec![0.0],
                outcome: Outcome::Tte { time, event },
                true_group: None,
                true_cate: None,
            })
            .collect();
        let ds = ExperimentDataset::new(
            records,
            OutcomeKind::Tte,
            RecruitmentModel::Accrual { accrual_months: 0.0, study_months: None },
        )
        .unwrap();
        // far enough out that the snapshot never censors a fixture row
        ds.snapshot_at(Checkpoint::Month(1e9)).unwrap()
    }

    // Independent oracle: the same Breslow log-likelihood evaluated naively.
    fn breslow_ll(rows: &[(f64, bool, bool)], weights: &[f64], beta: f64) -> f64 {
        let mut ll = 0.0;
        for (i, &(t, event, treated)) in rows.iter().enumerate() {
            if !event || weights[i] <= 0.0 {
                continue;
            }
            let mut denom = 0.0;
            for (j, &(tj, _, trj)) in rows.iter().enumerate() {
                if tj >= t && weights[j] > 0.0 {
                    denom += weights[j] * if trj { beta.exp() } else { 1.0 };
                }
            }
            let x = f64::from(u8::from(treated));
            ll += weights[i] * (beta * x - denom.ln());
        }
        ll
    }

    #[test]
    fn symmetric_arms_fit_exactly_zero() {
        let rows = [(1.0, true, true), (2.0, true, true), (1.0, true, false), (2.0, true, false)];
        let view = tte_view(&rows);
        let fit = cox_fit(&view, &[1.0; 4]).unwrap();
        assert_eq!(fit.log_hr, 0.0);
        assert!(fit.converged);
        assert!(fit.se.is_finite() && fit.se > 0.0);
    }

    #[test]
    fn newton_matches_grid_search_oracle() {
        let rows = [
            (1.0, true, true),
            (2.5, true, true),
            (4.0, false, true),
            (1.5, true, false),
            (3.0, true, false),
            (5.0, true, false),
        ];
        let weights = [1.0, 0.5, 1.0, 2.0, 1.0, 1.5];
        let view = tte_view(&rows);
        let fit = cox_fit(&view, &weights).unwrap();
        assert!(fit.converged);
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut beta = -5.0;
        while beta <= 5.0 {
            let ll = breslow_ll(&rows, &weights, beta);
            if ll > best.0 {
                best = (ll, beta);
            }
            beta += 1e-4;
        }
        assert!(
            (fit.log_hr - best.1).abs() < 1e-3,
            "newton {} vs grid {}",
            fit.log_hr,
            best.1
        );
    }

    #[test]
    fn score_vanishes_at_the_fit() {
        let rows = [
            (0.7, true, true),
            (1.9, true, true),
            (2.2, true, false),
            (0.9, true, false),
            (3.1, false, false),
            (1.1, true, true),
        ];
        let view = tte_view(&rows);
        let fit = cox_fit(&view, &[1.0; 6]).unwrap();
        assert!(fit.converged);
        let all = super::rows(&view, &[1.0; 6]).unwrap();
        let (score, _, _) = score_info(&all, fit.log_hr);
        assert!(score.abs() < 1e-6, "score {score}");
    }

    #[test]
    fn weight_two_equals_duplication() {
        let base = [
            (1.0, true, true),
            (2.5, true, false),
            (3.5, true, true),
            (4.5, false, false),
            (2.0, true, false),
        ];
        let view = tte_view(&base);
        let weighted = cox_fit(&view, &[2.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut dup = base.to_vec();
        dup.push(base[0]);
        let dup_view = tte_view(&dup);
        let duplicated = cox_fit(&dup_view, &[1.0; 6]).unwrap();
        assert!((weighted.log_hr - duplicated.log_hr).abs() < 1e-8);
        assert!((weighted.se - duplicated.se).abs() < 1e-8);
    }

    #[test]
    fn no_events_is_an_error() {
        let rows = [(1.0, false, true), (2.0, false, false)];
        let view = tte_view(&rows);
        assert!(matches!(cox_fit(&view, &[1.0, 1.0]), Err(SurvivalError::NoEvents)));
        // zero weights wipe out the only events
        let rows2 = [(1.0, true, true), (2.0, false, false)];
        let view2 = tte_view(&rows2);
        assert!(matches!(cox_fit(&view2, &[0.0, 1.0]), Err(SurvivalError::NoEvents)));
    }

    #[test]
    fn one_armed_events_cap_without_converging() {
        let rows = [
            (1.0, true, false),
            (2.0, true, false),
            (3.0, true, false),
            (4.0, false, true),
            (5.0, false, true),
        ];
        let view = tte_view(&rows);
        let fit = cox_fit(&view, &[1.0; 5]).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.log_hr.abs(), 10.0);
    }
}
