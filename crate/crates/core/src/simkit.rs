//! Synthetic trial generation and the replication harness that turns
//! monitors into stopping-probability tables. Replications are paired:
//! every method sees the identical dataset within a replication, and all
//! randomness is derived from the base seed so any execution order or
//! thread count produces identical summaries.

use std::io;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::clash::{monitor, ClashConfig, ClashError, Mode};
use crate::data::{Checkpoint, ExperimentDataset, Outcome, OutcomeKind, ParticipantRecord, RecruitmentModel};
use crate::seeds::{derive_seed, rng_from, Stream};
use crate::stats::wilson_interval;
use crate::survival::{simulate_tte, SurvivalError, TteScenario};

const WILSON_Z: f64 = 1.959964;

/// Two-arm Gaussian trial: one treated and one control participant per
/// recruitment step, binary covariates, and a treated-arm mean shift that
/// depends on subgroup membership.
#[derive(Clone, Debug)]
pub struct GaussianScenario {
    pub n_participants: usize,
    pub dim: usize,
    /// subgroup = all of the first minority_k covariates equal one,
    /// giving an expected subgroup share of 2^-minority_k
    pub minority_k: usize,
    /// overrides the covariate-product subgroup with a direct coin flip
    pub minority_prob: Option<f64>,
    /// treated-arm mean shift outside the subgroup
    pub theta0: f64,
    /// treated-arm mean shift inside the subgroup
    pub theta1: f64,
    pub noise_sd: f64,
    /// interim looks as cumulative participant counts
    pub checkpoints: Vec<usize>,
}

impl Default for GaussianScenario {
    fn default() -> Self {
        GaussianScenario {
            n_participants: 4000,
            dim: 3,
            minority_k: 1,
            minority_prob: None,
            theta0: 0.0,
            theta1: 0.0,
            noise_sd: 1.0,
            checkpoints: vec![1000, 2000, 3000],
        }
    }
}

impl GaussianScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidScenario(msg.into()));
        if self.n_participants < 2 || self.n_participants % 2 != 0 {
            return bad("pair recruitment needs a positive even participant count");
        }
        if self.minority_k == 0 || self.minority_k > self.dim {
            return bad("need 1 <= minority_k <= dim");
        }
        if let Some(p) = self.minority_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("minority_prob must lie in [0, 1]");
            }
        }
        if !(self.noise_sd > 0.0) {
            return bad("noise_sd must be positive");
        }
        if !self.theta0.is_finite() || !self.theta1.is_finite() {
            return bad("effect sizes must be finite");
        }
        if self.checkpoints.is_empty() {
            return bad("need at least one checkpoint");
        }
        let mut prev = 0;
        for &c in &self.checkpoints {
            if c <= prev || c > self.n_participants {
                return bad("checkpoints must be strictly increasing counts within the trial");
            }
            prev = c;
        }
        Ok(())
    }

    fn group_effect(&self, in_group: bool) -> f64 {
        if in_group {
            self.theta1
        } else {
            self.theta0
        }
    }
}

/// Simulates one Gaussian trial. Each step recruits a treated participant
/// then a control participant at the same arrival time; outcomes are the
/// subgroup effect times the treatment indicator plus unit-scale noise.
pub fn simulate_gaussian(
    scenario: &GaussianScenario,
    seed: u64,
) -> Result<ExperimentDataset, SimError> {
    scenario.validate()?;
    let mut rng = rng_from(seed);
    let mut records = Vec::with_capacity(scenario.n_participants);
    for id in 0..scenario.n_participants as u64 {
        let treatment = id % 2 == 0;
        let arrival = (id / 2) as f64;
        let covariates: Vec<f64> =
            (0..scenario.dim).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let in_group = match scenario.minority_prob {
            Some(p) => rng.random::<f64>() < p,
            None => covariates[..scenario.minority_k].iter().all(|&x| x == 1.0),
        };
        let effect = scenario.group_effect(in_group);
        let noise: f64 = rng.sample(StandardNormal);
        let y = effect * f64::from(u8::from(treatment)) + scenario.noise_sd * noise;
        records.push(ParticipantRecord {
            id,
            arrival,
            treatment,
            covariates,
            outcome: Outcome::Gaussian { y },
            true_group: Some(i64::from(in_group)),
            true_cate: Some(effect),
        });
    }
    Ok(ExperimentDataset::new(records, OutcomeKind::Gaussian, RecruitmentModel::PairedSteps)?)
}

#[derive(Clone, Debug)]
pub enum Scenario {
    Gaussian(GaussianScenario),
    Tte(TteScenario),
}

impl Scenario {
    pub fn simulate(&self, seed: u64) -> Result<ExperimentDataset, SimError> {
        match self {
            Scenario::Gaussian(s) => simulate_gaussian(s, seed),
            Scenario::Tte(s) => Ok(simulate_tte(s, seed)?),
        }
    }

    pub fn checkpoints(&self) -> Vec<Checkpoint> {
        match self {
            Scenario::Gaussian(s) => s.checkpoints.iter().map(|&c| Checkpoint::Count(c)).collect(),
            Scenario::Tte(s) => s.checkpoint_months.iter().map(|&m| Checkpoint::Month(m)).collect(),
        }
    }

    pub fn theta(&self) -> (f64, f64) {
        match self {
            Scenario::Gaussian(s) => (s.theta0, s.theta1),
            Scenario::Tte(s) => (s.theta0, s.theta1),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Scenario::Gaussian(s) => (s.minority_k, s.dim),
            Scenario::Tte(s) => (s.minority_k, s.dim),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            Scenario::Gaussian(s) => s.validate(),
            Scenario::Tte(s) => Ok(s.validate()?),
        }
    }
}

/// One monitoring method to run per replication.
#[derive(Clone, Debug)]
pub struct MethodSpec {
    pub name: String,
    pub mode: Mode,
    pub config: ClashConfig,
}

#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub name: String,
    /// replications stopped at or before each checkpoint (cumulative)
    pub stops_by_checkpoint: Vec<usize>,
    /// replications stopped anywhere
    pub any_stops: usize,
    /// per-replication stop index, None when the monitor completed;
    /// kept so comparisons can stay paired
    pub stop_index_per_rep: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct SimulationSummary {
    pub scenario_id: String,
    pub theta0: f64,
    pub theta1: f64,
    pub minority_k: usize,
    pub dim: usize,
    pub reps: usize,
    pub checkpoints: Vec<Checkpoint>,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("replication {rep}, method {method}: {source}")]
    Replication {
        rep: usize,
        method: String,
        #[source]
        source: Box<ClashError>,
    },
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("summaries cover different grids: {0}")]
    GridMismatch(String),
    #[error("no method named {0} in the summary")]
    UnknownMethod(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn checkpoint_label(cp: Checkpoint) -> String {
    match cp {
        Checkpoint::Count(c) => format!("{c}"),
        Checkpoint::Month(m) => format!("{m}"),
    }
}

/// Runs every method over `reps` paired replications. Replication r draws
/// its dataset from a seed derived with the data stream and its fold
/// randomness from one derived with the monitor stream, both indexed by
/// r, so methods within a replication share everything shareable and the
/// result is identical under any parallel schedule.
pub fn run_replications(
    scenario: &Scenario,
    scenario_id: &str,
    methods: &[MethodSpec],
    reps: usize,
    base_seed: u64,
) -> Result<SimulationSummary, SimError> {
    scenario.validate()?;
    if reps == 0 {
        return Err(SimError::InvalidScenario("need at least one replication".into()));
    }
    if methods.is_empty() {
        return Err(SimError::InvalidScenario("need at least one method".into()));
    }
    let checkpoints = scenario.checkpoints();

    let per_rep: Vec<Vec<Option<usize>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let dataset = scenario.simulate(derive_seed(base_seed, rep as u64, Stream::Data))?;
            let monitor_seed = derive_seed(base_seed, rep as u64, Stream::Monitor);
            methods
                .iter()
                .map(|m| {
                    let trace = monitor(&dataset, &checkpoints, &m.config, m.mode, monitor_seed)
                        .map_err(|e| SimError::Replication {
                            rep,
                            method: m.name.clone(),
                            source: Box::new(e),
                        })?;
                    Ok(trace.reports.iter().position(|r| r.decision.stop))
                })
                .collect::<Result<Vec<Option<usize>>, SimError>>()
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let methods_summaries = methods
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let stop_index_per_rep: Vec<Option<usize>> =
                per_rep.iter().map(|row| row[mi]).collect();
            let stops_by_checkpoint = (0..checkpoints.len())
                .map(|k| {
                    stop_index_per_rep.iter().filter(|s| s.map_or(false, |i| i <= k)).count()
                })
                .collect();
            let any_stops = stop_index_per_rep.iter().filter(|s| s.is_some()).count();
            MethodSummary { name: m.name.clone(), stops_by_checkpoint, any_stops, stop_index_per_rep }
        })
        .collect();

    let (theta0, theta1) = scenario.theta();
    let (minority_k, dim) = scenario.shape();
    Ok(SimulationSummary {
        scenario_id: scenario_id.to_string(),
        theta0,
        theta1,
        minority_k,
        dim,
        reps,
        checkpoints,
        methods: methods_summaries,
    })
}

impl SimulationSummary {
    pub fn method(&self, name: &str) -> Result<&MethodSummary, SimError> {
        self.methods
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| SimError::UnknownMethod(name.to_string()))
    }

    /// Cumulative stop probability of a method at a checkpoint index.
    pub fn stop_prob(&self, name: &str, checkpoint_index: usize) -> Result<f64, SimError> {
        let m = self.method(name)?;
        Ok(m.stops_by_checkpoint[checkpoint_index] as f64 / self.reps as f64)
    }

    pub fn any_stop_prob(&self, name: &str) -> Result<f64, SimError> {
        Ok(self.method(name)?.any_stops as f64 / self.reps as f64)
    }

    /// Long-format rows: one per (method, checkpoint) plus an "any" row
    /// per method. Floats are fixed to six decimals so identical runs
    /// write identical bytes.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> Result<(), SimError> {
        writeln!(
            out,
            "scenario_id,theta0,theta1,k,d,method,checkpoint,stops,reps,stop_prob,ci_lo,ci_hi"
        )?;
        for m in &self.methods {
            let mut rows: Vec<(String, usize)> = self
                .checkpoints
                .iter()
                .zip(&m.stops_by_checkpoint)
                .map(|(&cp, &stops)| (checkpoint_label(cp), stops))
                .collect();
            rows.push(("any".to_string(), m.any_stops));
            for (label, stops) in rows {
                let p = stops as f64 / self.reps as f64;
                let (lo, hi) = wilson_interval(stops as u64, self.reps as u64, WILSON_Z);
                writeln!(
                    out,
                    "{},{:.6},{:.6},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                    self.scenario_id,
                    self.theta0,
                    self.theta1,
                    self.minority_k,
                    self.dim,
                    m.name,
                    label,
                    stops,
                    self.reps,
                    p,
                    lo,
                    hi
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub checkpoint: String,
    pub delta: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub scenario_id: String,
    pub method_a: String,
    pub method_b: String,
    pub rows: Vec<ComparisonRow>,
}

fn paired_delta(a: &[Option<usize>], b: &[Option<usize>], upto: Option<usize>) -> ComparisonRow {
    let hit = |s: &Option<usize>| match (s, upto) {
        (Some(i), Some(k)) => *i <= k,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| f64::from(u8::from(hit(x))) - f64::from(u8::from(hit(y))))
        .collect();
    let n = diffs.len() as f64;
    let delta = diffs.iter().sum::<f64>() / n;
    let se = (crate::stats::sample_var(&diffs) / n).sqrt();
    ComparisonRow {
        checkpoint: String::new(),
        delta,
        ci_lo: delta - WILSON_Z * se,
        ci_hi: delta + WILSON_Z * se,
    }
}

/// Paired difference in stopping probability between a method in `a` and
/// a method in `b`. Both summaries must come from runs over the same
/// scenario grid and seed so that replication r is the same dataset in
/// both; the confidence interval uses the variance of the per-replication
/// differences, which the pairing makes much tighter than two independent
/// intervals.
pub fn compare(
    a: &SimulationSummary,
    b: &SimulationSummary,
    method_a: &str,
    method_b: &str,
) -> Result<Comparison, SimError> {
    if a.reps != b.reps {
        return Err(SimError::GridMismatch(format!("reps {} vs {}", a.reps, b.reps)));
    }
    if a.checkpoints.len() != b.checkpoints.len()
        || a.checkpoints
            .iter()
            .zip(&b.checkpoints)
            .any(|(x, y)| checkpoint_label(*x) != checkpoint_label(*y))
    {
        return Err(SimError::GridMismatch("checkpoint grids differ".into()));
    }
    if (a.theta0, a.theta1, a.minority_k, a.dim) != (b.theta0, b.theta1, b.minority_k, b.dim) {
        return Err(SimError::GridMismatch("scenario parameters differ".into()));
    }
    let ma = a.method(method_a)?;
    let mb = b.method(method_b)?;
    let mut rows = Vec::with_capacity(a.checkpoints.len() + 1);
    for (k, &cp) in a.checkpoints.iter().enumerate() {
        let mut row = paired_delta(&ma.stop_index_per_rep, &mb.stop_index_per_rep, Some(k));
        row.checkpoint = checkpoint_label(cp);
        rows.push(row);
    }
    let mut any = paired_delta(&ma.stop_index_per_rep, &mb.stop_index_per_rep, None);
    any.checkpoint = "any".to_string();
    rows.push(any);
    Ok(Comparison {
        scenario_id: a.scenario_id.clone(),
        method_a: method_a.to_string(),
        method_b: method_b.to_string(),
        rows,
    })
}
