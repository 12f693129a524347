//! Weighted Kaplan-Meier curves and restricted mean survival time. The
//! restricted mean is the area under the survival curve up to a horizon;
//! its variance follows the Greenwood decomposition, with each event time
//! contributing the squared remaining area times its Greenwood factor.

use crate::data::{CheckpointView, OutcomeKind};
use crate::survival::SurvivalError;

/// One step of a weighted Kaplan-Meier curve.
#[derive(Clone, Copy, Debug)]
pub struct KmStep {
    pub time: f64,
    /// weighted at-risk count just before time
    pub at_risk: f64,
    /// weighted events exactly at time
    pub events: f64,
    /// survival just after time
    pub survival: f64,
}

#[derive(Clone, Debug)]
pub struct KmCurve {
    pub steps: Vec<KmStep>,
}

impl KmCurve {
    /// Fits the weighted product-limit estimator over (duration, event,
    /// weight) triples; zero-weight rows are ignored.
    pub fn fit(rows: &[(f64, bool, f64)]) -> Result<KmCurve, SurvivalError> {
        let mut alive: Vec<(f64, bool, f64)> =
            rows.iter().copied().filter(|&(_, _, w)| w > 0.0).collect();
        if alive.is_empty() {
            return Err(SurvivalError::NoneAtRisk);
        }
        alive.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut at_risk: f64 = alive.iter().map(|&(_, _, w)| w).sum();
        let mut survival = 1.0;
        let mut steps = Vec::new();
        let mut i = 0;
        while i < alive.len() {
            let t = alive[i].0;
            let mut events = 0.0;
            let mut leaving = 0.0;
            let mut j = i;
            while j < alive.len() && alive[j].0 == t {
                let (_, event, w) = alive[j];
                if event {
                    events += w;
                }
                leaving += w;
                j += 1;
            }
            if events > 0.0 {
                survival *= 1.0 - events / at_risk;
                steps.push(KmStep { time: t, at_risk, events, survival });
            }
            at_risk -= leaving;
            i = j;
        }
        Ok(KmCurve { steps })
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for step in &self.steps {
            if step.time <= t {
                s = step.survival;
            } else {
                break;
            }
        }
        s
    }

    /// Area under the curve up to the horizon.
    pub fn rmst(&self, horizon: f64) -> f64 {
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut s = 1.0;
        for step in &self.steps {
            if step.time >= horizon {
                break;
            }
            area += s * (step.time - prev_t);
            prev_t = step.time;
            s = step.survival;
        }
        area + s * (horizon - prev_t)
    }

    /// Greenwood-based variance of the restricted mean: each event time
    /// weighs the area still ahead of it.
    pub fn rmst_variance(&self, horizon: f64) -> f64 {
        let within: Vec<&KmStep> = self.steps.iter().take_while(|s| s.time < horizon).collect();
        // remaining[i] = area under the curve from step i to the horizon,
        // built with a single backward sweep
        let mut remaining = vec![0.0; within.len()];
        let mut acc = 0.0;
        for i in (0..within.len()).rev() {
            let next_t = if i + 1 < within.len() { within[i + 1].time } else { horizon };
            acc += within[i].survival * (next_t - within[i].time);
            remaining[i] = acc;
        }
        let mut var = 0.0;
        for (step, &rem) in within.iter().zip(&remaining) {
            let survivors = step.at_risk - step.events;
            if survivors <= 0.0 || rem == 0.0 {
                continue;
            }
            var += rem * rem * step.events / (step.at_risk * survivors);
        }
        var
    }
}

fn arm_rows(view: &CheckpointView, weights: &[f64], treated: bool) -> Vec<(f64, bool, f64)> {
    view.records
        .iter()
        .zip(weights)
        .filter(|&(r, _)| r.treatment == treated)
        .map(|(r, &w)| {
            let (duration, event) = r.tte();
            (duration, event, w)
        })
        .collect()
}

/// Difference in restricted mean survival time, treated minus control,
/// so a treatment that delays beneficial events scores positive. Returns
/// the estimate and its standard error.
pub fn rmst_diff(
    view: &CheckpointView,
    weights: &[f64],
    horizon: f64,
) -> Result<(f64, f64), SurvivalError> {
    if view.outcome_kind != OutcomeKind::Tte {
        return Err(SurvivalError::NotTte);
    }
    assert_eq!(weights.len(), view.records.len(), "weights must align with the view");
    if !(horizon > 0.0) {
        return Err(SurvivalError::BadHorizon(horizon));
    }
    let max_t = view
        .records
        .iter()
        .map(|r| r.tte().0)
        .fold(f64::NEG_INFINITY, f64::max);
    if horizon > max_t {
        return Err(SurvivalError::HorizonBeyondData { horizon, max_observed: max_t });
    }
    let treated = KmCurve::fit(&arm_rows(view, weights, true))?;
    let control = KmCurve::fit(&arm_rows(view, weights, false))?;
    let diff = treated.rmst(horizon) - control.rmst(horizon);
    let se = (treated.rmst_variance(horizon) + control.rmst_variance(horizon)).sqrt();
    Ok((diff, se))
}
