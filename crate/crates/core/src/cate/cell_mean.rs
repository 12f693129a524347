//! Stratified difference-in-means estimator for discrete covariates: every
//! exact covariate tuple is a cell, and the effect inside a cell is the
//! treated mean minus the control mean.

use std::collections::BTreeMap;

use rand::Rng;

use crate::cate::{CateError, CatePrediction, SIGMA_FLOOR};
use crate::data::ParticipantRecord;
use crate::seeds::{derive_seed, rng_from, Stream};
use crate::stats::{mean, sample_var};

// Exact bit pattern of the covariate tuple; cells only merge on equality.
type CellKey = Vec<u64>;

fn cell_key(x: &[f64]) -> CellKey {
    x.iter().map(|v| v.to_bits()).collect()
}

#[derive(Clone, Debug)]
pub struct CellMeanModel {
    cells: BTreeMap<CellKey, (f64, f64)>,
    global_tau: f64,
    global_sigma_inflated: f64,
}

#[derive(Default)]
struct ArmYs {
    treated: Vec<f64>,
    control: Vec<f64>,
}

fn plug_in_sigma(treated: &[f64], control: &[f64]) -> f64 {
    // s^2 = 0 when an arm has a single observation, by convention.
    let v = sample_var(treated) / treated.len() as f64
        + sample_var(control) / control.len() as f64;
    v.sqrt().max(SIGMA_FLOOR)
}

fn bootstrap_sigma(treated: &[f64], control: &[f64], draws: usize, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let taus: Vec<f64> = (0..draws)
        .map(|_| {
            let m1 = mean(
                &(0..treated.len())
                    .map(|_| treated[rng.random_range(0..treated.len())])
                    .collect::<Vec<_>>(),
            );
            let m0 = mean(
                &(0..control.len())
                    .map(|_| control[rng.random_range(0..control.len())])
                    .collect::<Vec<_>>(),
            );
            m1 - m0
        })
        .collect();
    sample_var(&taus).sqrt().max(SIGMA_FLOOR)
}

/// Fits per-cell treated/control means. Cells missing an arm are left out
/// of the table and resolve through the global estimate with its sigma
/// inflated tenfold, flagged as fallback predictions.
pub fn fit_cell_mean(
    train: &[&ParticipantRecord],
    bootstrap: Option<usize>,
    seed: u64,
) -> Result<CellMeanModel, CateError> {
    if train.is_empty() {
        return Err(CateError::EmptyTrain);
    }
    let mut by_cell: BTreeMap<CellKey, ArmYs> = BTreeMap::new();
    let mut global = ArmYs::default();
    for r in train {
        let entry = by_cell.entry(cell_key(&r.covariates)).or_default();
        if r.treatment {
            entry.treated.push(r.y());
            global.treated.push(r.y());
        } else {
            entry.control.push(r.y());
            global.control.push(r.y());
        }
    }
    if global.treated.is_empty() {
        return Err(CateError::MissingArm("treated"));
    }
    if global.control.is_empty() {
        return Err(CateError::MissingArm("control"));
    }
    let global_tau = mean(&global.treated) - mean(&global.control);
    let global_sigma = plug_in_sigma(&global.treated, &global.control);

    let mut cells = BTreeMap::new();
    for (i, (key, ys)) in by_cell.into_iter().enumerate() {
        if ys.treated.is_empty() || ys.control.is_empty() {
            continue;
        }
        let tau = mean(&ys.treated) - mean(&ys.control);
        let sigma = match bootstrap {
            Some(draws) => bootstrap_sigma(
                &ys.treated,
                &ys.control,
                draws,
                derive_seed(seed, i as u64, Stream::Bootstrap),
            ),
            None => plug_in_sigma(&ys.treated, &ys.control),
        };
        cells.insert(key, (tau, sigma));
    }
    Ok(CellMeanModel {
        cells,
        global_tau,
        global_sigma_inflated: (global_sigma * 10.0).max(SIGMA_FLOOR),
    })
}

impl CellMeanModel {
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
