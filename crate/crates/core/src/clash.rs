//! Two-stage harm monitoring. Stage one estimates each participant's
//! treatment effect with cross-fitting and turns the estimates into
//! membership weights for the plausibly harmed subgroup; stage two feeds
//! the weighted sample to a sequential stopping test. Homogeneous and
//! oracle weighting run through the same plumbing so comparisons stay
//! paired.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cate::{crossfit_cate, CateError, CateEstimates, CateParams, EstimatorKind};
use crate::data::{
    paired_differences, Checkpoint, CheckpointView, DataError, ExperimentDataset, OutcomeKind,
    RecruitmentModel,
};
use crate::seeds::{derive_seed, Stream};
use crate::seqtests::{
    bayes_estimation, compute_boundary, decide, default_threshold, gaussian_sprt, maxsprt,
    maxsprt_critical_value, msprt, weighted_z, Bound, BoundaryFamily, BoundarySchedule, Decision,
    StoppingTestConfig, TestError, TestKind, TestStatistic,
};
use crate::stats::norm_cdf;
use crate::survival::of_cox_test;

/// Fixed seed for MaxSPRT bound calibration. The bound depends only on
/// (alpha, horizon), not on the monitored data, so every monitor shares
/// one calibration and the disk cache is hit across runs.
const MAXSPRT_CALIBRATION_SEED: u64 = 0x0bad_cafe;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightProvenance {
    Clash,
    Oracle,
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HarmDirection {
    /// Larger outcomes (or slower beneficial events) are bad.
    IncreaseHarmful,
    /// Smaller outcomes are bad; effects are negated before weighting.
    DecreaseHarmful,
}

impl HarmDirection {
    fn orient(self, tau: f64) -> f64 {
        match self {
            HarmDirection::IncreaseHarmful => tau,
            HarmDirection::DecreaseHarmful => -tau,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Clash,
    Homogeneous,
    Oracle,
}

/// Per-participant weights in [0,1] with a record of how they were made.
#[derive(Clone, Debug)]
pub struct WeightVector {
    weights: BTreeMap<u64, f64>,
    pub provenance: WeightProvenance,
}

impl WeightVector {
    fn new(weights: BTreeMap<u64, f64>, provenance: WeightProvenance) -> Self {
        debug_assert!(weights.values().all(|w| (0.0..=1.0).contains(w)));
        WeightVector { weights, provenance }
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.weights.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.weights.iter().map(|(&id, &w)| (id, w))
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Weights in the view's record order. Coverage must match exactly.
    pub fn aligned(&self, view: &CheckpointView) -> Result<Vec<f64>, ClashError> {
        if self.weights.len() != view.records.len() {
            return Err(ClashError::WeightCoverage {
                have: self.weights.len(),
                want: view.records.len(),
            });
        }
        view.records
            .iter()
            .map(|r| {
                self.get(r.id).ok_or(ClashError::WeightCoverage {
                    have: self.weights.len(),
                    want: view.records.len(),
                })
            })
            .collect()
    }

    /// Counts per weight decile, for trace summaries.
    pub fn histogram(&self) -> [usize; 10] {
        let mut bins = [0usize; 10];
        for &w in self.weights.values() {
            let bin = ((w * 10.0).floor() as usize).min(9);
            bins[bin] += 1;
        }
        bins
    }
}

#[derive(Clone, Debug)]
pub struct ClashConfig {
    /// Minimum effect size considered harmful.
    pub delta: f64,
    pub estimator: EstimatorKind,
    pub k_folds: usize,
    pub test: StoppingTestConfig,
    pub harm_direction: HarmDirection,
    pub cate_params: CateParams,
    /// Whether the monitored checkpoints already include the final
    /// analysis; when false the boundary design reserves one more look.
    pub includes_final_analysis: bool,
}

impl Default for ClashConfig {
    fn default() -> Self {
        ClashConfig {
            delta: 0.1,
            estimator: EstimatorKind::CellMean,
            k_folds: 5,
            test: StoppingTestConfig::default(),
            harm_direction: HarmDirection::IncreaseHarmful,
            cate_params: CateParams::default(),
            includes_final_analysis: false,
        }
    }
}

impl ClashConfig {
    pub fn validate(&self) -> Result<(), ClashError> {
        if !(self.delta > 0.0) {
            return Err(ClashError::InvalidConfig("delta must be positive".into()));
        }
        if self.k_folds < 2 {
            return Err(ClashError::InvalidConfig("k_folds must be at least 2".into()));
        }
        self.test.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CateSummary {
    pub mean_tau: f64,
    pub mean_sigma: f64,
    pub fallback_count: usize,
    pub n: usize,
}

impl CateSummary {
    fn from_estimates(estimates: &CateEstimates) -> Self {
        let n = estimates.by_id.len();
        let (mut tau, mut sigma, mut fallback) = (0.0, 0.0, 0usize);
        for e in estimates.by_id.values() {
            tau += e.tau_hat;
            sigma += e.sigma_hat;
            fallback += usize::from(e.fallback);
        }
        let denom = n.max(1) as f64;
        CateSummary {
            mean_tau: tau / denom,
            mean_sigma: sigma / denom,
            fallback_count: fallback,
            n,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckpointReport {
    pub checkpoint: Checkpoint,
    pub decision: Decision,
    pub weight_total: f64,
    pub weight_histogram: [usize; 10],
    pub provenance: WeightProvenance,
    pub cate: Option<CateSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    StoppedAt { checkpoint_index: usize },
    Completed,
}

/// Everything a monitoring run produced, one report per evaluated
/// checkpoint. Reports end at the first stop.
#[derive(Clone, Debug)]
pub struct MonitoringTrace {
    pub reports: Vec<CheckpointReport>,
    pub verdict: Verdict,
}

impl MonitoringTrace {
    pub fn stopped(&self) -> bool {
        matches!(self.verdict, Verdict::StoppedAt { .. })
    }
}

#[derive(Debug, Error)]
pub enum ClashError {
    #[error("invalid monitoring config: {0}")]
    InvalidConfig(String),
    #[error("effect estimation failed: {0}")]
    Cate(#[from] CateError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Test(#[from] TestError),
    #[error("record {0} lacks a true effect; oracle weights need synthetic data")]
    MissingTrueCate(u64),
    #[error("weights cover {have} ids but the view holds {want} records")]
    WeightCoverage { have: usize, want: usize },
    #[error("empty view at a monitored checkpoint")]
    EmptyView,
}

/// Soft membership in the harmed subgroup: the probability mass the
/// estimate puts above the minimum harmful effect,
/// w = 1 - Phi((delta - tau_hat) / sigma_hat).
pub fn clash_weights(
    estimates: &CateEstimates,
    delta: f64,
    direction: HarmDirection,
) -> WeightVector {
    let weights = estimates
        .by_id
        .iter()
        .map(|(&id, e)| {
            let tau = direction.orient(e.tau_hat);
            let w = 1.0 - norm_cdf((delta - tau) / e.sigma_hat);
            (id, w.clamp(0.0, 1.0))
        })
        .collect();
    WeightVector::new(weights, WeightProvenance::Clash)
}

/// Hard membership using the simulator's ground truth: weight one exactly
/// when the true effect points in the harmful direction.
pub fn oracle_weights(
    view: &CheckpointView,
    direction: HarmDirection,
) -> Result<WeightVector, ClashError> {
    let weights = view
        .records
        .iter()
        .map(|r| {
            let tau = r.true_cate.ok_or(ClashError::MissingTrueCate(r.id))?;
            Ok((r.id, f64::from(u8::from(direction.orient(tau) > 0.0))))
        })
        .collect::<Result<BTreeMap<u64, f64>, ClashError>>()?;
    Ok(WeightVector::new(weights, WeightProvenance::Oracle))
}

pub fn unit_weights(view: &CheckpointView) -> WeightVector {
    WeightVector::new(
        view.records.iter().map(|r| (r.id, 1.0)).collect(),
        WeightProvenance::Unit,
    )
}

// Weighted paired differences for the SPRT family: each complete pair
// contributes its treated member's weight.
fn pair_diffs_and_weights(
    view: &CheckpointView,
    weights: &WeightVector,
) -> Result<Option<(Vec<f64>, Vec<f64>)>, ClashError> {
    let pairs = match paired_differences(view) {
        Ok(p) => p,
        Err(DataError::NoCompletePairs) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let w = pairs
        .pair_ids
        .iter()
        .map(|&(treated_id, _)| {
            weights.get(treated_id).ok_or(ClashError::WeightCoverage {
                have: weights.len(),
                want: view.records.len(),
            })
        })
        .collect::<Result<Vec<f64>, ClashError>>()?;
    Ok(Some((pairs.diffs, w)))
}

fn gaussian_statistic(
    view: &CheckpointView,
    weights: &WeightVector,
    config: &ClashConfig,
) -> Result<TestStatistic, ClashError> {
    let kind = config.test.kind;
    if kind.is_z_family() {
        let aligned = weights.aligned(view)?;
        return Ok(match config.test.sigma2.pair_variance(view) {
            Some(pair_var) => weighted_z(view, &aligned, pair_var, kind),
            None => TestStatistic::degenerate(kind),
        });
    }
    if kind == TestKind::BayesEstimation {
        let aligned = weights.aligned(view)?;
        return Ok(bayes_estimation(view, &aligned, &config.test));
    }
    // SPRT family runs on paired differences
    let Some((diffs, pair_w)) = pair_diffs_and_weights(view, weights)? else {
        return Ok(TestStatistic::degenerate(kind));
    };
    Ok(match kind {
        TestKind::GaussianSprt => match config.test.sigma2.pair_variance_from_diffs(&diffs) {
            Some(v) => {
                let scale = v.sqrt();
                let standardized: Vec<f64> = diffs.iter().map(|d| d / scale).collect();
                gaussian_sprt(&standardized, &pair_w, config.test.sprt_beta / scale)
            }
            None => TestStatistic::degenerate(kind),
        },
        TestKind::MaxSprt => match config.test.sigma2.pair_variance_from_diffs(&diffs) {
            Some(v) => {
                let scale = v.sqrt();
                let standardized: Vec<f64> = diffs.iter().map(|d| d / scale).collect();
                maxsprt(&standardized, &pair_w)
            }
            None => TestStatistic::degenerate(kind),
        },
        TestKind::Msprt => match config.test.sigma2.outcome_variance_from_diffs(&diffs) {
            Some(s2) => msprt(&diffs, &pair_w, config.test.msprt_tau2, config.test.msprt_theta0, s2),
            None => TestStatistic::degenerate(kind),
        },
        _ => unreachable!("z family and bayes handled above"),
    })
}

/// One interim look: build the weights the mode calls for, compute the
/// configured weighted statistic, and check it against the bound for
/// this checkpoint. Estimation failures surface as errors; thin data
/// surfaces as a degenerate continue decision.
pub fn run_checkpoint(
    view: &CheckpointView,
    config: &ClashConfig,
    mode: Mode,
    bound: Bound<'_>,
    checkpoint_index: usize,
    seed: u64,
) -> Result<(Decision, WeightVector, Option<CateEstimates>), ClashError> {
    if view.records.is_empty() {
        return Err(ClashError::EmptyView);
    }
    let (weights, estimates) = match mode {
        Mode::Homogeneous => (unit_weights(view), None),
        Mode::Oracle => (oracle_weights(view, config.harm_direction)?, None),
        Mode::Clash => {
            let estimates =
                crossfit_cate(view, config.estimator, config.k_folds, seed, &config.cate_params)?;
            let weights = clash_weights(&estimates, config.delta, config.harm_direction);
            (weights, Some(estimates))
        }
    };
    let decision = match view.outcome_kind {
        OutcomeKind::Gaussian => {
            let statistic = gaussian_statistic(view, &weights, config)?;
            decide(statistic, bound, checkpoint_index)?
        }
        OutcomeKind::Tte => {
            let Bound::Schedule(schedule) = bound else {
                return Err(ClashError::InvalidConfig(
                    "time-to-event monitoring needs a group-sequential boundary".into(),
                ));
            };
            let aligned = weights.aligned(view)?;
            of_cox_test(view, &aligned, schedule, checkpoint_index)?
        }
    };
    Ok((decision, weights, estimates))
}

// How the configured test turns checkpoints into bounds.
enum BoundPlan {
    Schedule(BoundarySchedule),
    Threshold(f64),
}

fn information_fractions(
    dataset: &ExperimentDataset,
    checkpoints: &[Checkpoint],
) -> Result<Vec<f64>, ClashError> {
    let bad = |msg: &str| ClashError::InvalidConfig(msg.into());
    let mut fractions = Vec::with_capacity(checkpoints.len());
    for cp in checkpoints {
        let f = match (*cp, dataset.recruitment()) {
            (Checkpoint::Count(c), _) => {
                if c == 0 || c > dataset.len() {
                    return Err(bad("count checkpoints must lie in 1..=n"));
                }
                c as f64 / dataset.len() as f64
            }
            (Checkpoint::Month(m), RecruitmentModel::Accrual { study_months: Some(total), .. }) => {
                if !(m > 0.0 && m <= total) {
                    return Err(bad("month checkpoints must lie in (0, study duration]"));
                }
                m / total
            }
            (Checkpoint::Month(_), _) => {
                return Err(bad("month checkpoints need a dataset with a study duration"));
            }
        };
        fractions.push(f);
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("checkpoints must be strictly increasing"));
    }
    Ok(fractions)
}

fn bound_plan(
    dataset: &ExperimentDataset,
    checkpoints: &[Checkpoint],
    config: &ClashConfig,
) -> Result<BoundPlan, ClashError> {
    match config.test.kind {
        TestKind::OfZ | TestKind::PocockZ => {
            let family = if config.test.kind == TestKind::OfZ {
                BoundaryFamily::ObrienFleming
            } else {
                BoundaryFamily::Pocock
            };
            let fractions = information_fractions(dataset, checkpoints)?;
            let schedule = compute_boundary(
                config.test.alpha,
                &fractions,
                family,
                config.includes_final_analysis,
            )
            .map_err(TestError::from)?;
            Ok(BoundPlan::Schedule(schedule))
        }
        TestKind::GaussianSprt | TestKind::Msprt | TestKind::BayesEstimation => {
            let threshold = default_threshold(&config.test)
                .expect("sprt, msprt and bayes tests have closed-form thresholds");
            Ok(BoundPlan::Threshold(threshold))
        }
        TestKind::MaxSprt => {
            if dataset.outcome_kind() != OutcomeKind::Gaussian {
                return Err(ClashError::InvalidConfig(
                    "the sequential probability ratio family needs gaussian outcomes".into(),
                ));
            }
            // calibration horizon: every pair the design could ever see
            let max_n = (dataset.len() / 2).max(1);
            let critical =
                maxsprt_critical_value(config.test.alpha, max_n, MAXSPRT_CALIBRATION_SEED)
                    .map_err(ClashError::Test)?;
            Ok(BoundPlan::Threshold(critical))
        }
    }
}

/// Runs the configured monitor over the checkpoints in order, stopping at
/// the first boundary crossing. The seed drives per-checkpoint fold
/// assignment only; the data are fixed.
pub fn monitor(
    dataset: &ExperimentDataset,
    checkpoints: &[Checkpoint],
    config: &ClashConfig,
    mode: Mode,
    seed: u64,
) -> Result<MonitoringTrace, ClashError> {
    config.validate()?;
    if checkpoints.is_empty() {
        return Err(ClashError::InvalidConfig("need at least one checkpoint".into()));
    }
    if config.test.kind == TestKind::GaussianSprt
        || config.test.kind == TestKind::Msprt
        || config.test.kind == TestKind::MaxSprt
    {
        if dataset.outcome_kind() != OutcomeKind::Gaussian {
            return Err(ClashError::InvalidConfig(
                "the sequential probability ratio family needs gaussian outcomes".into(),
            ));
        }
    }
    let plan = bound_plan(dataset, checkpoints, config)?;
    let mut reports = Vec::with_capacity(checkpoints.len());
    let mut verdict = Verdict::Completed;
    for (k, &cp) in checkpoints.iter().enumerate() {
        let view = dataset.snapshot_at(cp)?;
        let bound = match &plan {
            BoundPlan::Schedule(s) => Bound::Schedule(s),
            BoundPlan::Threshold(t) => Bound::Threshold(*t),
        };
        let checkpoint_seed = derive_seed(seed, k as u64, Stream::Folds);
        let (decision, weights, estimates) =
            run_checkpoint(&view, config, mode, bound, k, checkpoint_seed)?;
        reports.push(CheckpointReport {
            checkpoint: cp,
            decision,
            weight_total: weights.total(),
            weight_histogram: weights.histogram(),
            provenance: weights.provenance,
            cate: estimates.as_ref().map(CateSummary::from_estimates),
        });
        if decision.stop {
            verdict = Verdict::StoppedAt { checkpoint_index: k };
            break;
        }
    }
    Ok(MonitoringTrace { reports, verdict })
}
