//! Cross-fitted heterogeneous treatment effect estimation: per participant
//! (tau_hat, sigma_hat) pairs produced by a model that never saw that
//! participant's outcome.

mod cell_mean;
mod forest;
mod linear;
mod tte_hazard;

pub use cell_mean::{fit_cell_mean, CellMeanModel};
pub use forest::{fit_causal_forest, ForestModel, ForestParams};
pub use linear::{fit_linear_t_learner, LinearTModel};
pub use tte_hazard::{fit_tte_cell_hazard, TteHazardModel};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::data::{CheckpointView, OutcomeKind, ParticipantRecord};
use crate::seeds::{derive_seed, rng_from, Stream};

/// Lower bound on every reported sigma_hat. A numerical guard against
/// division blow-ups on noiseless cells, not a statistical choice.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    CellMean,
    CausalForest,
    LinearTLearner,
    TteCellHazard,
}

impl EstimatorKind {
    pub fn outcome_kind(self) -> OutcomeKind {
        match self {
            EstimatorKind::TteCellHazard => OutcomeKind::Tte,
            _ => OutcomeKind::Gaussian,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CateParams {
    pub forest: ForestParams,
    /// When set, the cell-mean estimator draws this many bootstrap
    /// resamples per cell for sigma_hat instead of the plug-in formula.
    pub bootstrap_sigma: Option<usize>,
}

/// One cross-fitted prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatePrediction {
    pub tau_hat: f64,
    pub sigma_hat: f64,
    /// True when the estimator had to fall back to a global estimate.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CateEstimate {
    pub tau_hat: f64,
    pub sigma_hat: f64,
    pub fold: usize,
    pub fallback: bool,
}

/// Cross-fitted estimates covering every participant in the view.
#[derive(Clone, Debug, Default)]
pub struct CateEstimates {
    pub by_id: BTreeMap<u64, CateEstimate>,
}

#[derive(Clone, Debug)]
pub struct FoldAssignment {
    pub fold_of: BTreeMap<u64, usize>,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CateError {
    #[error("k-fold split needs k >= 2, got {0}")]
    KTooSmall(usize),
    #[error("k = {k} exceeds the {n} available records")]
    KAboveN { k: usize, n: usize },
    #[error("empty training set")]
    EmptyTrain,
    #[error("training set lacks a {0} arm")]
    MissingArm(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("arm {arm} needs at least {needed} records for the regression, got {got}")]
    TooFewForRegression { arm: &'static str, needed: usize, got: usize },
    #[error("no events in the training set")]
    NoEvents,
    #[error("estimator {kind:?} does not handle {outcome:?} outcomes")]
    WrongOutcome { kind: EstimatorKind, outcome: OutcomeKind },
    #[error("fit failed on fold {fold}: {source}")]
    FoldFit {
        fold: usize,
        #[source]
        source: Box<CateError>,
    },
}

/// Balanced deterministic fold assignment: ids are sorted, shuffled with a
/// seeded RNG, and dealt round-robin, so fold sizes differ by at most one
/// and record order never matters.
pub fn assign_folds(ids: &[u64], k: usize, seed: u64) -> Result<FoldAssignment, CateError> {
    if k < 2 {
        return Err(CateError::KTooSmall(k));
    }
    if k > ids.len() {
        return Err(CateError::KAboveN { k, n: ids.len() });
    }
    let mut sorted: Vec<u64> = ids.to_vec();
    sorted.sort_unstable();
    let mut rng = rng_from(derive_seed(seed, 0, Stream::Folds));
    sorted.shuffle(&mut rng);
    let fold_of = sorted.iter().enumerate().map(|(i, &id)| (id, i % k)).collect();
    Ok(FoldAssignment { fold_of, k, seed })
}

/// A fitted model able to predict (tau_hat, sigma_hat) from covariates.
#[derive(Clone, Debug)]
pub enum FittedCate {
    CellMean(CellMeanModel),
    Forest(ForestModel),
    Linear(LinearTModel),
    TteHazard(TteHazardModel),
}

impl FittedCate {
    pub fn predict(&self, x: &[f64]) -> CatePrediction {
        match self {
            FittedCate::CellMean(m) => m.predict(x),
            FittedCate::Forest(m) => m.predict(x),
            FittedCate::Linear(m) => m.predict(x),
            FittedCate::TteHazard(m) => m.predict(x),
        }
    }
}

/// Fits the requested estimator on a training subset.
pub fn fit_estimator(
    kind: EstimatorKind,
    train: &[&ParticipantRecord],
    params: &CateParams,
    seed: u64,
) -> Result<FittedCate, CateError> {
    Ok(match kind {
        EstimatorKind::CellMean => {
            FittedCate::CellMean(fit_cell_mean(train, params.bootstrap_sigma, seed)?)
        }
        EstimatorKind::CausalForest => {
            FittedCate::Forest(fit_causal_forest(train, &params.forest, seed)?)
        }
        EstimatorKind::LinearTLearner => FittedCate::Linear(fit_linear_t_learner(train)?),
        EstimatorKind::TteCellHazard => FittedCate::TteHazard(fit_tte_cell_hazard(train)?),
    })
}

/// Cross-fitted estimates: for each fold, a model trained on everything
/// outside the fold predicts the fold's members, so no participant's
/// outcome influences their own estimate.
pub fn crossfit_cate(
    view: &CheckpointView,
    estimator: EstimatorKind,
    k: usize,
    seed: u64,
    params: &CateParams,
) -> Result<CateEstimates, CateError> {
    if view.outcome_kind != estimator.outcome_kind() {
        return Err(CateError::WrongOutcome { kind: estimator, outcome: view.outcome_kind });
    }
    if view.records.is_empty() {
        return Err(CateError::EmptyTrain);
    }
    let ids = view.ids();
    let folds = assign_folds(&ids, k, seed)?;
    let mut estimates = CateEstimates::default();
    for fold in 0..k {
        let train: Vec<&ParticipantRecord> = view
            .records
            .iter()
            .filter(|r| folds.fold_of[&r.id] != fold)
            .collect();
        let fit_seed = derive_seed(seed, fold as u64 + 1, Stream::Folds);
        let model = fit_estimator(estimator, &train, params, fit_seed)
            .map_err(|e| CateError::FoldFit { fold, source: Box::new(e) })?;
        for r in view.records.iter().filter(|r| folds.fold_of[&r.id] == fold) {
            let p = model.predict(&r.covariates);
            estimates.by_id.insert(
                r.id,
                CateEstimate {
                    tau_hat: p.tau_hat,
                    sigma_hat: p.sigma_hat,
                    fold,
                    fallback: p.fallback,
                },
            );
        }
    }
    Ok(estimates)
}
