//! Sequential monitoring of randomized experiments for early evidence of
//! harm, with optional covariate-based weighting that concentrates the
//! test on the participants a fitted effect model flags as harmed.
//!
//! The crate is organized as a pipeline:
//!
//! * [`data`] holds participant records, checkpoint snapshots, and CSV io
//! * [`seqtests`] provides group-sequential boundaries and the
//!   fully-sequential test family (mixture and plug-in likelihood ratios,
//!   plain likelihood ratio, posterior probability)
//! * [`cate`] fits cross-fitted conditional effect estimates with
//!   per-point uncertainty
//! * [`survival`] simulates time-to-event trials and supplies weighted
//!   proportional-hazards and restricted-mean contrasts
//! * [`clash`] ties the stages together into a monitor that re-derives
//!   weights at every checkpoint and feeds weighted statistics to a
//!   stopping rule
//! * [`simkit`] replicates whole monitored trials to estimate stopping
//!   probabilities with paired confidence intervals

pub mod cate;
pub mod clash;
pub mod data;
pub mod seeds;
pub mod seqtests;
pub mod simkit;
pub mod stats;
pub mod survival;

pub use clash::{monitor, ClashConfig, HarmDirection, Mode, MonitoringTrace};
pub use data::{Checkpoint, ExperimentDataset, Outcome, OutcomeKind, ParticipantRecord};
pub use seqtests::{BoundaryFamily, BoundarySchedule, StoppingTestConfig, TestKind};
pub use simkit::{run_replications, GaussianScenario, MethodSpec, Scenario, SimulationSummary};
