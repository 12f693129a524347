//! Stopping-test statistics and decision rules: weighted z tests against
//! group-sequential boundaries, the SPRT family over paired differences,
//! and a conjugate Bayesian estimation test.

mod boundary;
mod maxsprt_cal;

pub use boundary::{
    compute_boundary, mc_crossing_prob, BoundaryError, BoundaryFamily, BoundarySchedule,
};
pub use maxsprt_cal::{maxsprt_critical_value, maxsprt_critical_value_with, CalibrationOptions};

use thiserror::Error;

use crate::data::CheckpointView;
use crate::stats::{norm_cdf, sample_var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestKind {
    OfZ,
    PocockZ,
    GaussianSprt,
    Msprt,
    MaxSprt,
    BayesEstimation,
}

impl TestKind {
    pub fn is_z_family(self) -> bool {
        matches!(self, TestKind::OfZ | TestKind::PocockZ)
    }
}

/// Outcome variance handling for tests that need one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sigma2 {
    /// Known per-outcome variance (each arm's observation has this variance).
    Fixed(f64),
    /// Plug-in sample variance recomputed at every checkpoint.
    Estimate,
}

impl Sigma2 {
    /// Variance of a single treated-minus-control difference. `Fixed(s)`
    /// doubles the per-outcome variance; `Estimate` sums per-arm sample
    /// variances of the view. None when it cannot be estimated yet.
    pub fn pair_variance(&self, view: &CheckpointView) -> Option<f64> {
        match *self {
            Sigma2::Fixed(s) => Some(2.0 * s),
            Sigma2::Estimate => {
                let mut y1 = Vec::new();
                let mut y0 = Vec::new();
                for r in &view.records {
                    if r.treatment {
                        y1.push(r.y());
                    } else {
                        y0.push(r.y());
                    }
                }
                if y1.len() < 2 || y0.len() < 2 {
                    return None;
                }
                let v = sample_var(&y1) + sample_var(&y0);
                (v > 0.0).then_some(v)
            }
        }
    }

    /// Same quantity estimated from paired differences directly.
    pub fn pair_variance_from_diffs(&self, diffs: &[f64]) -> Option<f64> {
        match *self {
            Sigma2::Fixed(s) => Some(2.0 * s),
            Sigma2::Estimate => {
                if diffs.len() < 2 {
                    return None;
                }
                let v = sample_var(diffs);
                (v > 0.0).then_some(v)
            }
        }
    }

    /// Per-outcome variance of a single arm, for tests parameterized on the
    /// outcome scale rather than the pair scale. A pair difference carries
    /// twice the per-outcome variance, hence the halving under `Estimate`.
    pub fn outcome_variance_from_diffs(&self, diffs: &[f64]) -> Option<f64> {
        match *self {
            Sigma2::Fixed(s) => Some(s),
            Sigma2::Estimate => self.pair_variance_from_diffs(diffs).map(|v| v / 2.0),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StoppingTestConfig {
    pub kind: TestKind,
    pub alpha: f64,
    /// Simple alternative for the plain SPRT, on the standardized
    /// difference scale.
    pub sprt_beta: f64,
    pub msprt_tau2: f64,
    pub msprt_theta0: f64,
    pub sigma2: Sigma2,
    pub bayes_prior_mean: f64,
    pub bayes_prior_var: f64,
    /// Harm threshold the posterior is evaluated against.
    pub bayes_harm_threshold: f64,
}

impl Default for StoppingTestConfig {
    fn default() -> Self {
        Self {
            kind: TestKind::OfZ,
            alpha: 0.05,
            sprt_beta: 0.5,
            msprt_tau2: 1.0,
            msprt_theta0: 0.0,
            sigma2: Sigma2::Estimate,
            bayes_prior_mean: 0.0,
            bayes_prior_var: 1.0,
            bayes_harm_threshold: 0.0,
        }
    }
}

impl StoppingTestConfig {
    pub fn validate(&self) -> Result<(), TestError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TestError::InvalidConfig("alpha must lie in (0,1)".into()));
        }
        if !(self.msprt_tau2 > 0.0) {
            return Err(TestError::InvalidConfig("msprt_tau2 must be positive".into()));
        }
        if let Sigma2::Fixed(s) = self.sigma2 {
            if !(s > 0.0) {
                return Err(TestError::InvalidConfig("sigma2 must be positive".into()));
            }
        }
        if !(self.bayes_prior_var > 0.0) {
            return Err(TestError::InvalidConfig("bayes prior variance must be positive".into()));
        }
        if self.bayes_harm_threshold < 0.0 {
            return Err(TestError::InvalidConfig("bayes harm threshold must be >= 0".into()));
        }
        if !(self.sprt_beta > 0.0) {
            return Err(TestError::InvalidConfig("sprt_beta must be positive".into()));
        }
        Ok(())
    }
}

/// A computed statistic. `value` is the z value for the z family, the log
/// likelihood ratio for the SPRT and mSPRT, the maximized log likelihood
/// ratio for the MaxSPRT, and the posterior harm probability for the
/// Bayesian test. A degenerate statistic forces a continue decision.
#[derive(Clone, Copy, Debug)]
pub struct TestStatistic {
    pub value: f64,
    /// Total weight behind the statistic.
    pub n_effective: f64,
    pub kind: TestKind,
    pub degenerate: bool,
}

impl TestStatistic {
    pub fn degenerate(kind: TestKind) -> Self {
        Self { value: f64::NAN, n_effective: 0.0, kind, degenerate: true }
    }

    /// Likelihood ratio on the natural scale (mSPRT/SPRT values are logs).
    pub fn likelihood_ratio(&self) -> f64 {
        self.value.exp()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Decision {
    pub stop: bool,
    pub statistic: TestStatistic,
    pub bound: f64,
    pub checkpoint_index: usize,
    pub degenerate: bool,
}

/// Decision bound: a per-look schedule for the z family, or a scalar
/// threshold for any test.
#[derive(Clone, Copy, Debug)]
pub enum Bound<'a> {
    Schedule(&'a BoundarySchedule),
    Threshold(f64),
}

#[derive(Debug, Error)]
pub enum TestError {
    #[error("invalid test config: {0}")]
    InvalidConfig(String),
    #[error("bound kind does not fit statistic kind {kind:?}")]
    KindBoundMismatch { kind: TestKind },
    #[error("checkpoint index {index} outside schedule of length {len}")]
    CheckpointIndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error("io failure during calibration: {0}")]
    CalibrationIo(#[from] std::io::Error),
}

/// Weighted difference-in-means z statistic:
/// sqrt(sum w) / sqrt(2 sigma2) * (weighted treated mean - weighted control mean).
/// `sigma2` is taken at face value; for a unit-variance null, callers must
/// pass the variance of one treated-minus-control difference, exactly what
/// `Sigma2::pair_variance` returns.
pub fn weighted_z(view: &CheckpointView, weights: &[f64], sigma2: f64, kind: TestKind) -> TestStatistic {
    debug_assert!(kind.is_z_family());
    assert_eq!(weights.len(), view.records.len(), "weights must align with view records");
    let mut sw = 0.0;
    let mut swd = 0.0;
    let mut swc = 0.0;
    let mut syd = 0.0;
    let mut syc = 0.0;
    for (r, &w) in view.records.iter().zip(weights) {
        sw += w;
        if r.treatment {
            swd += w;
            syd += w * r.y();
        } else {
            swc += w;
            syc += w * r.y();
        }
    }
    if !(swd > 0.0 && swc > 0.0 && sigma2 > 0.0 && sw > 0.0) {
        return TestStatistic::degenerate(kind);
    }
    let value = sw.sqrt() / (2.0 * sigma2).sqrt() * (syd / swd - syc / swc);
    if !value.is_finite() {
        return TestStatistic::degenerate(kind);
    }
    TestStatistic { value, n_effective: sw, kind, degenerate: false }
}

/// Unweighted difference-in-means z statistic, computed through per-arm
/// means rather than the weighted sums. Kept as a separate code path so the
/// unit-weight reduction can be checked between independent routes.
pub fn unweighted_z(view: &CheckpointView, sigma2: f64, kind: TestKind) -> TestStatistic {
    debug_assert!(kind.is_z_family());
    let mut y1 = Vec::new();
    let mut y0 = Vec::new();
    for r in &view.records {
        if r.treatment {
            y1.push(r.y());
        } else {
            y0.push(r.y());
        }
    }
    if y1.is_empty() || y0.is_empty() || !(sigma2 > 0.0) {
        return TestStatistic::degenerate(kind);
    }
    let n = (y1.len() + y0.len()) as f64;
    let m1 = y1.iter().sum::<f64>() / y1.len() as f64;
    let m0 = y0.iter().sum::<f64>() / y0.len() as f64;
    let value = n.sqrt() / (2.0 * sigma2).sqrt() * (m1 - m0);
    TestStatistic { value, n_effective: n, kind, degenerate: false }
}

/// Simple-alternative SPRT log likelihood ratio over weighted paired
/// differences: beta * sum(w z) - (sum w / 2) * beta^2. Differences are
/// expected on the standardized (unit variance) scale.
pub fn gaussian_sprt(diffs: &[f64], weights: &[f64], beta: f64) -> TestStatistic {
    assert_eq!(diffs.len(), weights.len(), "weights must align with diffs");
    let sw: f64 = weights.iter().sum();
    let swz: f64 = diffs.iter().zip(weights).map(|(z, w)| w * z).sum();
    TestStatistic {
        value: beta * swz - 0.5 * sw * beta * beta,
        n_effective: sw,
        kind: TestKind::GaussianSprt,
        degenerate: false,
    }
}

/// Gaussian mixture SPRT over weighted paired differences, computed in log
/// space. With W = sum w and S = sum w z the natural-scale statistic is
/// sqrt(2s2/(2s2+tau2 W)) * exp(tau2 (S - theta0 W)^2 / (4 s2 (2s2 + tau2 W)))
/// where s2 is the per-outcome variance of one arm.
pub fn msprt(diffs: &[f64], weights: &[f64], tau2: f64, theta0: f64, sigma2: f64) -> TestStatistic {
    assert_eq!(diffs.len(), weights.len(), "weights must align with diffs");
    if !(tau2 > 0.0 && sigma2 > 0.0) {
        return TestStatistic::degenerate(TestKind::Msprt);
    }
    let w_sum: f64 = weights.iter().sum();
    let swz: f64 = diffs.iter().zip(weights).map(|(z, w)| w * z).sum();
    let two_s2 = 2.0 * sigma2;
    let denom = two_s2 + tau2 * w_sum;
    let dev = swz - theta0 * w_sum;
    let log_lambda = 0.5 * (two_s2 / denom).ln() + tau2 * dev * dev / (2.0 * two_s2 * denom);
    TestStatistic {
        value: log_lambda,
        n_effective: w_sum,
        kind: TestKind::Msprt,
        degenerate: false,
    }
}

/// MaxSPRT statistic over weighted paired differences: the simple SPRT log
/// likelihood ratio maximized over the alternative. The maximizing
/// alternative is the weighted mean S/W, which makes the statistic equal
/// (sum w z)^2 / (2 sum w). Differences are expected standardized.
pub fn maxsprt(diffs: &[f64], weights: &[f64]) -> TestStatistic {
    assert_eq!(diffs.len(), weights.len(), "weights must align with diffs");
    let w_sum: f64 = weights.iter().sum();
    if !(w_sum > 0.0) {
        return TestStatistic::degenerate(TestKind::MaxSprt);
    }
    let swz: f64 = diffs.iter().zip(weights).map(|(z, w)| w * z).sum();
    let beta_hat = swz / w_sum;
    let value = beta_hat * swz - 0.5 * w_sum * beta_hat * beta_hat;
    TestStatistic { value, n_effective: w_sum, kind: TestKind::MaxSprt, degenerate: false }
}

/// Posterior probability that the weighted treatment effect exceeds the harm
/// threshold, under a conjugate Gaussian model: the weighted difference in
/// means is treated as one observation of the effect with known variance.
/// An empty view returns the prior probability unchanged.
pub fn bayes_estimation(
    view: &CheckpointView,
    weights: &[f64],
    config: &StoppingTestConfig,
) -> TestStatistic {
    assert_eq!(weights.len(), view.records.len(), "weights must align with view records");
    let prior_prob = |m: f64, v: f64| 1.0 - norm_cdf((config.bayes_harm_threshold - m) / v.sqrt());
    if view.records.is_empty() {
        return TestStatistic {
            value: prior_prob(config.bayes_prior_mean, config.bayes_prior_var),
            n_effective: 0.0,
            kind: TestKind::BayesEstimation,
            degenerate: false,
        };
    }
    let mut sw = 0.0;
    let mut swd = 0.0;
    let mut swc = 0.0;
    let mut syd = 0.0;
    let mut syc = 0.0;
    for (r, &w) in view.records.iter().zip(weights) {
        sw += w;
        if r.treatment {
            swd += w;
            syd += w * r.y();
        } else {
            swc += w;
            syc += w * r.y();
        }
    }
    if !(swd > 0.0 && swc > 0.0) {
        return TestStatistic::degenerate(TestKind::BayesEstimation);
    }
    let Some(pair_var) = config.sigma2.pair_variance(view) else {
        return TestStatistic::degenerate(TestKind::BayesEstimation);
    };
    let delta_w = syd / swd - syc / swc;
    let se2 = 2.0 * pair_var / sw;
    let post_prec = 1.0 / config.bayes_prior_var + 1.0 / se2;
    let post_var = 1.0 / post_prec;
    let post_mean = post_var * (config.bayes_prior_mean / config.bayes_prior_var + delta_w / se2);
    TestStatistic {
        value: prior_prob(post_mean, post_var),
        n_effective: sw,
        kind: TestKind::BayesEstimation,
        degenerate: false,
    }
}

/// Compares a statistic against its bound. Stop iff value > bound and the
/// statistic is not degenerate. Schedules are only defined for the z family.
pub fn decide(
    statistic: TestStatistic,
    bound: Bound<'_>,
    checkpoint_index: usize,
) -> Result<Decision, TestError> {
    let bound_value = match bound {
        Bound::Schedule(schedule) => {
            if !statistic.kind.is_z_family() {
                return Err(TestError::KindBoundMismatch { kind: statistic.kind });
            }
            *schedule.bounds.get(checkpoint_index).ok_or(TestError::CheckpointIndexOutOfRange {
                index: checkpoint_index,
                len: schedule.bounds.len(),
            })?
        }
        Bound::Threshold(b) => b,
    };
    let stop = !statistic.degenerate && statistic.value > bound_value;
    Ok(Decision {
        stop,
        statistic,
        bound: bound_value,
        checkpoint_index,
        degenerate: statistic.degenerate,
    })
}

/// Scalar stop threshold for the self-bounded tests: -ln(alpha) for the
/// SPRT and mSPRT (log scale), 1 - alpha for the Bayesian posterior test.
/// The MaxSPRT needs Monte Carlo calibration instead.
pub fn default_threshold(config: &StoppingTestConfig) -> Option<f64> {
    match config.kind {
        TestKind::GaussianSprt | TestKind::Msprt => Some(-config.alpha.ln()),
        TestKind::BayesEstimation => Some(1.0 - config.alpha),
        _ => None,
    }
}
