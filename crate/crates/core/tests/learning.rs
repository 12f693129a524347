//! Effect-estimation behavior that only shows up end to end: cross-fitting
//! honesty, weight convergence toward the oracle indicator, and the
//! hazard-based estimator separating a harmed subgroup.

use earlystop::cate::{crossfit_cate, CateParams, EstimatorKind, ForestParams};
use earlystop::clash::{clash_weights, oracle_weights, HarmDirection};
use earlystop::data::{Checkpoint, CheckpointView, ExperimentDataset, Outcome};
use earlystop::simkit::{simulate_gaussian, GaussianScenario};
use earlystop::survival::{simulate_tte, TteScenario};

fn full_view(ds: &ExperimentDataset) -> CheckpointView {
    match ds.outcome_kind() {
        earlystop::data::OutcomeKind::Gaussian => {
            ds.snapshot_at(Checkpoint::Count(ds.len())).unwrap()
        }
        earlystop::data::OutcomeKind::Tte => ds.snapshot_at(Checkpoint::Month(1e9)).unwrap(),
    }
}

#[test]
fn crossfit_predictions_ignore_same_fold_outcomes() {
    let scenario = GaussianScenario {
        n_participants: 400,
        theta1: 1.0,
        checkpoints: vec![400],
        ..GaussianScenario::default()
    };
    let ds = simulate_gaussian(&scenario, 31).unwrap();
    let view = full_view(&ds);
    let params = CateParams::default();
    let base = crossfit_cate(&view, EstimatorKind::CellMean, 5, 555, &params).unwrap();

    // shove one outcome far away and refit with the same seed
    let target = 7u64;
    let fold = base.by_id[&target].fold;
    let mut records = ds.records().to_vec();
    let slot = records.iter_mut().find(|r| r.id == target).unwrap();
    let Outcome::Gaussian { y } = slot.outcome else { unreachable!() };
    slot.outcome = Outcome::Gaussian { y: y + 40.0 };
    let perturbed =
        ExperimentDataset::new(records, ds.outcome_kind(), ds.recruitment()).unwrap();
    let refit =
        crossfit_cate(&full_view(&perturbed), EstimatorKind::CellMean, 5, 555, &params).unwrap();

    let mut outside_changed = false;
    for (id, e) in &base.by_id {
        let r = &refit.by_id[id];
        assert_eq!(e.fold, r.fold, "fold assignment must not depend on outcomes");
        if e.fold == fold {
            // the model predicting this fold never saw the perturbed record
            assert_eq!(e.tau_hat, r.tau_hat, "id {id} prediction moved with a fold-mate outcome");
            assert_eq!(e.sigma_hat, r.sigma_hat);
        } else if e.tau_hat != r.tau_hat {
            outside_changed = true;
        }
    }
    assert!(outside_changed, "a 40-sigma outlier must move some out-of-fold prediction");
}

#[test]
fn crossfit_folds_follow_the_seed() {
    let scenario = GaussianScenario {
        n_participants: 300,
        checkpoints: vec![300],
        ..GaussianScenario::default()
    };
    let ds = simulate_gaussian(&scenario, 32).unwrap();
    let view = full_view(&ds);
    let params = CateParams::default();
    let a = crossfit_cate(&view, EstimatorKind::CellMean, 5, 1, &params).unwrap();
    let b = crossfit_cate(&view, EstimatorKind::CellMean, 5, 1, &params).unwrap();
    let c = crossfit_cate(&view, EstimatorKind::CellMean, 5, 2, &params).unwrap();
    assert!(a.by_id.iter().all(|(id, e)| b.by_id[id] == *e));
    assert!(a.by_id.iter().any(|(id, e)| c.by_id[id].fold != e.fold));
}

fn mean_weight_error(n: usize, seed: u64) -> f64 {
    let scenario = GaussianScenario {
        n_participants: n,
        theta1: 0.5,
        checkpoints: vec![n],
        ..GaussianScenario::default()
    };
    let ds = simulate_gaussian(&scenario, seed).unwrap();
    let view = full_view(&ds);
    let estimates =
        crossfit_cate(&view, EstimatorKind::CellMean, 5, seed, &CateParams::default()).unwrap();
    let fitted = clash_weights(&estimates, 0.15, HarmDirection::IncreaseHarmful);
    let oracle = oracle_weights(&view, HarmDirection::IncreaseHarmful).unwrap();
    let total: f64 = view
        .records
        .iter()
        .map(|r| (fitted.get(r.id).unwrap() - oracle.get(r.id).unwrap()).abs())
        .sum();
    total / view.n() as f64
}

#[test]
fn weight_error_shrinks_with_sample_size() {
    let reps = 8;
    let avg = |n: usize| -> f64 {
        (0..reps).map(|r| mean_weight_error(n, 9000 + r)).sum::<f64>() / reps as f64
    };
    let small = avg(1000);
    let large = avg(4000);
    assert!(
        large <= small + 0.02,
        "weight error must not grow with data: {small} at n=1000, {large} at n=4000"
    );
    assert!(large < 0.15, "weight error {large} still large at n=4000");
}

#[test]
fn forest_crossfit_separates_the_harmed_group() {
    let scenario = GaussianScenario {
        n_participants: 600,
        theta1: 1.0,
        checkpoints: vec![600],
        ..GaussianScenario::default()
    };
    let ds = simulate_gaussian(&scenario, 33).unwrap();
    let view = full_view(&ds);
    let params = CateParams {
        forest: ForestParams { n_trees: 60, ..ForestParams::default() },
        ..CateParams::default()
    };
    let estimates = crossfit_cate(&view, EstimatorKind::CausalForest, 5, 44, &params).unwrap();
    let (mut harmed, mut n_harmed, mut rest, mut n_rest) = (0.0, 0, 0.0, 0);
    for r in &view.records {
        let tau = estimates.by_id[&r.id].tau_hat;
        if r.true_group == Some(1) {
            harmed += tau;
            n_harmed += 1;
        } else {
            rest += tau;
            n_rest += 1;
        }
    }
    let harmed = harmed / n_harmed as f64;
    let rest = rest / n_rest as f64;
    assert!(
        harmed > rest + 0.3,
        "forest should rank the harmed group higher: {harmed} vs {rest}"
    );
}

#[test]
fn hazard_estimator_flags_the_harmed_group() {
    let scenario = TteScenario {
        n_participants: 2000,
        theta0: 0.12,
        theta1: 0.06,
        minority_k: 2,
        ..TteScenario::default()
    };
    let ds = simulate_tte(&scenario, 34).unwrap();
    let view = ds.snapshot_at(Checkpoint::Month(24.0)).unwrap();
    let estimates =
        crossfit_cate(&view, EstimatorKind::TteCellHazard, 5, 55, &CateParams::default()).unwrap();
    let weights = clash_weights(&estimates, 0.05, HarmDirection::IncreaseHarmful);

    let (mut w_harmed, mut n_harmed, mut w_rest, mut n_rest) = (0.0, 0, 0.0, 0);
    for r in &view.records {
        let w = weights.get(r.id).unwrap();
        if r.true_group == Some(1) {
            w_harmed += w;
            n_harmed += 1;
        } else {
            w_rest += w;
            n_rest += 1;
        }
    }
    let w_harmed = w_harmed / n_harmed as f64;
    let w_rest = w_rest / n_rest as f64;
    assert!(
        w_harmed > w_rest + 0.3,
        "harmed group should carry more weight: {w_harmed} vs {w_rest}"
    );
    assert!(w_harmed > 0.5, "harmed group mean weight {w_harmed} too low");
}
