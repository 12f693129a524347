//! Time-to-event support: a two-arm trial simulator with staggered
//! accrual and dropout, weighted Cox fitting, restricted mean survival
//! time, and the group-sequential Cox stopping test.
//!
//! Events here are beneficial, so harm means the treatment slows them
//! down: a hazard ratio below one. Every statistic in this module is
//! oriented so that positive values indicate harm.

mod cox;
mod km;

pub use cox::{cox_fit, CoxFit};
pub use km::{rmst_diff, KmCurve, KmStep};

use rand::Rng;
use thiserror::Error;

use crate::data::{
    CheckpointView, DataError, ExperimentDataset, Outcome, OutcomeKind, ParticipantRecord,
    RecruitmentModel,
};
use crate::seeds::rng_from;
use crate::seqtests::{decide, Bound, BoundarySchedule, Decision, TestError, TestKind, TestStatistic};

#[derive(Debug, Error)]
pub enum SurvivalError {
    #[error("time-to-event operation on a non-tte view")]
    NotTte,
    #[error("no weighted events in the view")]
    NoEvents,
    #[error("no at-risk subjects with positive weight")]
    NoneAtRisk,
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("horizon {horizon} exceeds the largest observed time {max_observed}")]
    HorizonBeyondData { horizon: f64, max_observed: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Two-arm trial with uniform accrual, exponential event times whose rate
/// depends on arm and subgroup, and exponential dropout. Months are the
/// time unit throughout; the dropout hazard is quoted per year.
#[derive(Clone, Debug)]
pub struct TteScenario {
    pub n_participants: usize,
    pub study_months: f64,
    pub accrual_months: f64,
    pub dropout_annual_hazard: f64,
    /// event rate in the control arm (and the rate scale for harm)
    pub control_hazard: f64,
    /// treated-arm event rate outside the sensitive subgroup
    pub theta0: f64,
    /// treated-arm event rate inside the sensitive subgroup
    pub theta1: f64,
    pub dim: usize,
    /// subgroup = all of the first minority_k covariates equal one
    pub minority_k: usize,
    /// overrides the covariate-product subgroup with a direct coin flip
    pub minority_prob: Option<f64>,
    pub checkpoint_months: Vec<f64>,
}

impl Default for TteScenario {
    fn default() -> Self {
        TteScenario {
            n_participants: 2000,
            study_months: 30.0,
            accrual_months: 12.0,
            dropout_annual_hazard: 0.014,
            control_hazard: 0.1,
            theta0: 0.1,
            theta1: 0.05,
            dim: 3,
            minority_k: 1,
            minority_prob: None,
            checkpoint_months: vec![12.0, 18.0, 24.0],
        }
    }
}

impl TteScenario {
    pub fn validate(&self) -> Result<(), SurvivalError> {
        let bad = |msg: &str| Err(SurvivalError::InvalidScenario(msg.into()));
        if self.n_participants == 0 {
            return bad("n_participants must be positive");
        }
        if !(self.control_hazard > 0.0 && self.theta0 > 0.0 && self.theta1 > 0.0) {
            return bad("all event hazards must be positive");
        }
        if self.dropout_annual_hazard < 0.0 {
            return bad("dropout hazard must be nonnegative");
        }
        if !(self.accrual_months > 0.0) || !(self.study_months > 0.0) {
            return bad("accrual and study durations must be positive");
        }
        if self.accrual_months > self.study_months {
            return bad("accrual cannot outlast the study");
        }
        if self.dim < self.minority_k || self.minority_k == 0 {
            return bad("need 1 <= minority_k <= dim");
        }
        if let Some(p) = self.minority_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("minority_prob must lie in [0, 1]");
            }
        }
        let mut prev = 0.0;
        for &m in &self.checkpoint_months {
            if !(m > prev) {
                return bad("checkpoint months must be increasing and positive");
            }
            if m > self.study_months {
                return bad("checkpoint months cannot exceed the study duration");
            }
            prev = m;
        }
        Ok(())
    }

    /// Information fractions for the boundary schedule: calendar time
    /// over study duration.
    pub fn info_fractions(&self) -> Vec<f64> {
        self.checkpoint_months.iter().map(|m| m / self.study_months).collect()
    }

    fn group_rate(&self, in_group: bool) -> f64 {
        if in_group {
            self.theta1
        } else {
            self.theta0
        }
    }

    /// Log hazard-ratio harm for a subgroup: positive when the treated
    /// rate falls below the control rate.
    pub fn true_cate(&self, in_group: bool) -> f64 {
        -(self.group_rate(in_group) / self.control_hazard).ln()
    }
}

fn exp_draw(rng: &mut impl Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random();
    // u is in [0,1); 1-u is in (0,1] so the log is finite. Clamp away the
    // exact zero a u of 0 would produce, since stored times must be positive.
    (-(1.0 - u).ln() / rate).max(f64::MIN_POSITIVE)
}

/// Simulates one trial. Treatment alternates down the accrual order so
/// the arms stay balanced at every calendar time. The stored outcome is
/// the dropout-resolved time (first of event or dropout); administrative
/// censoring at a calendar month happens later, at snapshot time.
pub fn simulate_tte(scenario: &TteScenario, seed: u64) -> Result<ExperimentDataset, SurvivalError> {
    scenario.validate()?;
    let mut rng = rng_from(seed);
    let n = scenario.n_participants;
    let dropout_rate = scenario.dropout_annual_hazard / 12.0;

    struct Draft {
        arrival: f64,
        covariates: Vec<f64>,
        in_group: bool,
        dropout: f64,
    }
    let drafts: Vec<Draft> = (0..n)
        .map(|_| {
            let arrival = rng.random::<f64>() * scenario.accrual_months;
            let covariates: Vec<f64> =
                (0..scenario.dim).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
            let in_group = match scenario.minority_prob {
                Some(p) => rng.random::<f64>() < p,
                None => covariates[..scenario.minority_k].iter().all(|&x| x == 1.0),
            };
            let dropout = exp_draw(&mut rng, dropout_rate);
            Draft { arrival, covariates, in_group, dropout }
        })
        .collect();

    let mut accrual_order: Vec<usize> = (0..n).collect();
    accrual_order.sort_by(|&a, &b| drafts[a].arrival.total_cmp(&drafts[b].arrival));
    let mut treated = vec![false; n];
    for (rank, &i) in accrual_order.iter().enumerate() {
        treated[i] = rank % 2 == 0;
    }

    let records: Vec<ParticipantRecord> = drafts
        .into_iter()
        .enumerate()
        .map(|(i, draft)| {
            let rate = if treated[i] {
                scenario.group_rate(draft.in_group)
            } else {
                scenario.control_hazard
            };
            let event_time = exp_draw(&mut rng, rate);
            let (time, event) = if event_time <= draft.dropout {
                (event_time, true)
            } else {
                (draft.dropout, false)
            };
            ParticipantRecord {
                id: i as u64,
                arrival: draft.arrival,
                treatment: treated[i],
                covariates: draft.covariates,
                outcome: Outcome::Tte { time, event },
                true_group: Some(i64::from(draft.in_group)),
                true_cate: Some(scenario.true_cate(draft.in_group)),
            }
        })
        .collect();

    Ok(ExperimentDataset::new(
        records,
        OutcomeKind::Tte,
        RecruitmentModel::Accrual {
            accrual_months: scenario.accrual_months,
            study_months: Some(scenario.study_months),
        },
    )?)
}

/// Group-sequential Cox test: fits the weighted regression, orients the
/// statistic so positive means harm, and checks it against the boundary
/// for this checkpoint. An event-free or zero-weight view yields a
/// degenerate continue decision rather than an error.
pub fn of_cox_test(
    view: &CheckpointView,
    weights: &[f64],
    schedule: &BoundarySchedule,
    checkpoint_index: usize,
) -> Result<Decision, TestError> {
    let statistic = match cox_fit(view, weights) {
        Ok(fit) if fit.se.is_finite() && fit.se > 0.0 => {
            let events: f64 = view
                .records
                .iter()
                .zip(weights)
                .filter(|&(r, &w)| w > 0.0 && r.tte().1)
                .map(|(_, &w)| w)
                .sum();
            TestStatistic {
                value: -fit.log_hr / fit.se,
                n_effective: events,
                kind: TestKind::OfZ,
                degenerate: false,
            }
        }
        Ok(_) | Err(SurvivalError::NoEvents) | Err(SurvivalError::NoneAtRisk) => {
            TestStatistic::degenerate(TestKind::OfZ)
        }
        Err(e) => {
            return Err(TestError::InvalidConfig(format!("cox fit failed: {e}")));
        }
    };
    decide(statistic, Bound::Schedule(schedule), checkpoint_index)
}
