//! Per-cell exponential hazard contrast for time-to-event outcomes. Within
//! each exact covariate cell the per-arm rate MLE is events over total
//! exposure; the effect is the log rate ratio oriented so that positive
//! means harm: events are beneficial, so a treatment that slows them down
//! (hazard ratio below one) scores positive.

use std::collections::BTreeMap;

use crate::cate::{CateError, CatePrediction, SIGMA_FLOOR};
use crate::data::ParticipantRecord;

type CellKey = Vec<u64>;

fn cell_key(x: &[f64]) -> CellKey {
    x.iter().map(|v| v.to_bits()).collect()
}

#[derive(Clone, Copy, Debug, Default)]
struct ArmExposure {
    events: f64,
    exposure: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct CellExposure {
    treated: ArmExposure,
    control: ArmExposure,
}

impl CellExposure {
    fn add(&mut self, r: &ParticipantRecord) {
        let (duration, event) = r.tte();
        let arm = if r.treatment { &mut self.treated } else { &mut self.control };
        arm.events += f64::from(u8::from(event));
        arm.exposure += duration;
    }

    fn direct(&self) -> Option<(f64, f64)> {
        // Direct estimation needs at least one event and positive exposure
        // in both arms; anything thinner goes through the global fallback.
        if self.treated.events < 1.0
            || self.control.events < 1.0
            || self.treated.exposure <= 0.0
            || self.control.exposure <= 0.0
        {
            return None;
        }
        let rate1 = self.treated.events / self.treated.exposure;
        let rate0 = self.control.events / self.control.exposure;
        let tau = rate0.ln() - rate1.ln();
        let sigma = (1.0 / self.treated.events + 1.0 / self.control.events).sqrt();
        Some((tau, sigma.max(SIGMA_FLOOR)))
    }

    // Rate estimate that tolerates an event-free arm by flooring the event
    // count at one half, so the global fallback always exists once the
    // training set has any event at all.
    fn guarded(&self) -> (f64, f64) {
        let e1 = self.treated.events.max(0.5);
        let e0 = self.control.events.max(0.5);
        let t1 = self.treated.exposure.max(f64::MIN_POSITIVE);
        let t0 = self.control.exposure.max(f64::MIN_POSITIVE);
        let tau = (e0 / t0).ln() - (e1 / t1).ln();
        let sigma = (1.0 / e1 + 1.0 / e0).sqrt();
        (tau, sigma.max(SIGMA_FLOOR))
    }
}

#[derive(Clone, Debug)]
pub struct TteHazardModel {
    cells: BTreeMap<CellKey, (f64, f64)>,
    global_tau: f64,
    global_sigma_inflated: f64,
}

pub fn fit_tte_cell_hazard(train: &[&ParticipantRecord]) -> Result<TteHazardModel, CateError> {
    if train.is_empty() {
        return Err(CateError::EmptyTrain);
    }
    let mut by_cell: BTreeMap<CellKey, CellExposure> = BTreeMap::new();
    let mut global = CellExposure::default();
    for r in train {
        by_cell.entry(cell_key(&r.covariates)).or_default().add(r);
        global.add(r);
    }
    if global.treated.exposure == 0.0 {
        return Err(CateError::MissingArm("treated"));
    }
    if global.control.exposure == 0.0 {
        return Err(CateError::MissingArm("control"));
    }
    if global.treated.events + global.control.events == 0.0 {
        return Err(CateError::NoEvents);
    }
    let (global_tau, global_sigma) = global.guarded();
    let cells = by_cell
        .into_iter()
        .filter_map(|(key, cell)| cell.direct().map(|est| (key, est)))
        .collect();
    Ok(TteHazardModel {
        cells,
        global_tau,
        global_sigma_inflated: (global_sigma * 10.0).max(SIGMA_FLOOR),
    })
}

impl TteHazardModel {
    pub fn predict(&self, x: &[f64]) -> CatePrediction {
        match self.cells.get(&cell_key(x)) {
            Some(&(tau_hat, sigma_hat)) => {
                CatePrediction { tau_hat, sigma_hat, fallback: false }
            }
            None => CatePrediction {
                tau_hat: self.global_tau,
                sigma_hat: self.global_sigma_inflated,
                fallback: true,
            },
        }
    }
}
