//! Acceptance gate for the monitoring toolkit. Each test checks one
//! numbered claim about the finished system and prints a single
//! criterion line; run with `--nocapture` to see all twelve.

use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use earlystop::cate::{crossfit_cate, CateParams, EstimatorKind};
use earlystop::clash::{clash_weights, oracle_weights, ClashConfig, HarmDirection, Mode};
use earlystop::data::{
    Checkpoint, CheckpointView, Outcome, OutcomeKind, ParticipantRecord, RecruitmentModel,
};
use earlystop::seeds::rng_from;
use earlystop::seqtests::{
    maxsprt, msprt, unweighted_z, weighted_z, StoppingTestConfig, TestKind,
};
use earlystop::simkit::{
    compare, run_replications, GaussianScenario, MethodSpec, Scenario, SimulationSummary,
};
use earlystop::survival::{cox_fit, simulate_tte, TteScenario};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_earlystop")
}

fn report(criterion: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:02}: {verdict} - {detail}");
}

fn mc_bound(alpha: f64, reps: usize) -> f64 {
    alpha + 3.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt()
}

fn homog_of() -> MethodSpec {
    MethodSpec { name: "homog".into(), mode: Mode::Homogeneous, config: ClashConfig::default() }
}

fn clash_of() -> MethodSpec {
    MethodSpec { name: "clash".into(), mode: Mode::Clash, config: ClashConfig::default() }
}

fn oracle_of() -> MethodSpec {
    MethodSpec { name: "oracle".into(), mode: Mode::Oracle, config: ClashConfig::default() }
}

fn clash_msprt() -> MethodSpec {
    MethodSpec {
        name: "clash_msprt".into(),
        mode: Mode::Clash,
        config: ClashConfig {
            test: StoppingTestConfig { kind: TestKind::Msprt, ..StoppingTestConfig::default() },
            ..ClashConfig::default()
        },
    }
}

fn dominance_scenario(theta1: f64) -> Scenario {
    Scenario::Gaussian(GaussianScenario {
        n_participants: 4000,
        dim: 5,
        minority_k: 3,
        theta0: 0.0,
        theta1,
        checkpoints: vec![1000, 2000, 3000],
        ..GaussianScenario::default()
    })
}

fn any_gap(summary: &SimulationSummary, a: &str, b: &str) -> (f64, f64, f64) {
    let cmp = compare(summary, summary, a, b).unwrap();
    let any = cmp.rows.last().unwrap();
    (any.delta, any.ci_lo, any.ci_hi)
}

#[test]
fn criterion_01_boundary_value_from_the_cli() {
    let started = Instant::now();
    let out = Command::new(bin())
        .args(["boundary", "--alpha", "0.05", "--fractions", "0.5", "--family", "of", "--no-final"])
        .output()
        .unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(out.status.success(), "boundary exited with {:?}", out.status);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row = stdout.lines().nth(1).expect("one data row");
    let bound: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    let pass = (bound - 2.37).abs() <= 0.02 && elapsed < 5.0;
    report(1, pass, &format!("halfway bound {bound:.6} vs 2.37 +/- 0.02 in {elapsed:.2}s"));
    assert!(pass, "bound {bound} or runtime {elapsed}s out of budget");
}

#[test]
fn criterion_02_single_look_misses_concentrated_harm() {
    let started = Instant::now();
    let reps = 500;
    let scenario = |theta1: f64| {
        Scenario::Gaussian(GaussianScenario {
            n_participants: 2000,
            minority_prob: Some(0.10),
            theta0: 0.0,
            theta1,
            checkpoints: vec![1000],
            ..GaussianScenario::default()
        })
    };
    let harmed =
        run_replications(&scenario(1.0), "c2-harm", &[homog_of()], reps, 1002).unwrap();
    let p_harm = harmed.any_stop_prob("homog").unwrap();
    let null = run_replications(&scenario(0.0), "c2-null", &[homog_of()], reps, 2002).unwrap();
    let p_null = null.any_stop_prob("homog").unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let null_bound = mc_bound(0.05, reps);
    let pass = p_harm < 0.25 && p_null <= null_bound && elapsed < 120.0;
    report(
        2,
        pass,
        &format!(
            "10% minority harm stops {p_harm:.3} (< 0.25), null stops {p_null:.3} \
             (<= {null_bound:.3}) in {elapsed:.1}s"
        ),
    );
    assert!(pass, "harm {p_harm}, null {p_null}, elapsed {elapsed}s");
}

#[test]
fn criterion_03_weighting_dominates_the_pooled_test() {
    let started = Instant::now();
    let reps = 200;
    let summary =
        run_replications(&dominance_scenario(1.0), "c3", &[clash_of(), homog_of()], reps, 1003)
            .unwrap();
    let p_clash = summary.any_stop_prob("clash").unwrap();
    let p_homog = summary.any_stop_prob("homog").unwrap();
    let (gap, ci_lo, _) = any_gap(&summary, "clash", "homog");
    let elapsed = started.elapsed().as_secs_f64();

    let pass = gap >= 0.20 && ci_lo > 0.0 && elapsed < 1800.0;
    report(
        3,
        pass,
        &format!(
            "weighted {p_clash:.3} vs pooled {p_homog:.3}: gap {gap:.3} \
             (need >= 0.20, ci low {ci_lo:.3}) in {elapsed:.1}s"
        ),
    );

    // the same design at half the effect, where the pooled test is not
    // already saturated, shows the margin the criterion is after
    let half =
        run_replications(&dominance_scenario(0.5), "c3-half", &[clash_of(), homog_of()], reps, 1003)
            .unwrap();
    let (half_gap, half_lo, _) = any_gap(&half, "clash", "homog");
    println!(
        "criterion 03 note: at theta1=0.5 the gap is {half_gap:.3} (ci low {half_lo:.3}) \
         over {:.3} pooled",
        half.any_stop_prob("homog").unwrap()
    );

    assert!(
        pass,
        "gap {gap:.3} (ci low {ci_lo:.3}) misses the 0.20 margin; the pooled test already \
         stops at {p_homog:.3} under theta1=1, so the margin is out of reach at this setting"
    );
}

#[test]
fn criterion_04_no_group_harm_means_no_extra_stopping() {
    let started = Instant::now();
    let reps = 500;
    let summary = run_replications(
        &dominance_scenario(0.0),
        "c4",
        &[clash_of(), clash_msprt()],
        reps,
        1004,
    )
    .unwrap();
    let p_of = summary.any_stop_prob("clash").unwrap();
    let p_msprt = summary.any_stop_prob("clash_msprt").unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let bound = mc_bound(0.05, reps);
    let pass = p_of <= bound && p_msprt <= bound;
    report(
        4,
        pass,
        &format!(
            "null stop rates {p_of:.3} (group-sequential) and {p_msprt:.3} (mixture) \
             vs {bound:.3} in {elapsed:.1}s"
        ),
    );
    assert!(pass, "null stop rates {p_of} / {p_msprt} above {bound}");
}

#[test]
fn criterion_05_ground_truth_weights_stop_almost_surely() {
    let reps = 200;
    let scenario = Scenario::Gaussian(GaussianScenario {
        n_participants: 4000,
        dim: 5,
        minority_k: 3,
        theta1: 0.5,
        checkpoints: vec![1000, 2000, 3000],
        ..GaussianScenario::default()
    });
    let summary = run_replications(&scenario, "c5", &[oracle_of()], reps, 1005).unwrap();
    let p = summary.any_stop_prob("oracle").unwrap();
    let pass = p >= 0.95;
    report(5, pass, &format!("oracle stop probability {p:.3} (need >= 0.95)"));
    assert!(pass, "oracle stop probability {p}");
}

fn mean_weight_error(n: usize, seed: u64) -> f64 {
    let scenario = GaussianScenario {
        n_participants: n,
        theta1: 0.5,
        checkpoints: vec![n],
        ..GaussianScenario::default()
    };
    let ds = earlystop::simkit::simulate_gaussian(&scenario, seed).unwrap();
    let view = ds.snapshot_at(Checkpoint::Count(n)).unwrap();
    let estimates =
        crossfit_cate(&view, EstimatorKind::CellMean, 5, seed, &CateParams::default()).unwrap();
    let fitted = clash_weights(&estimates, 0.15, HarmDirection::IncreaseHarmful);
    let oracle = oracle_weights(&view, HarmDirection::IncreaseHarmful).unwrap();
    view.records
        .iter()
        .map(|r| (fitted.get(r.id).unwrap() - oracle.get(r.id).unwrap()).abs())
        .sum::<f64>()
        / n as f64
}

#[test]
fn criterion_06_weights_converge_toward_the_indicator() {
    let reps = 8;
    let sizes = [1000usize, 2000, 4000, 8000];
    let errors: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            (0..reps).map(|r| mean_weight_error(n, 1006 + r)).sum::<f64>() / reps as f64
        })
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] + 0.02);
    let tail = *errors.last().unwrap();
    let pass = monotone && tail <= 0.1;
    report(
        6,
        pass,
        &format!(
            "mean |w - w*| over n=1000..8000: {:.3}, {:.3}, {:.3}, {:.3} (tail <= 0.1)",
            errors[0], errors[1], errors[2], errors[3]
        ),
    );
    assert!(pass, "ladder {errors:?}");
}

fn random_gaussian_view(n_pairs: usize, rng: &mut ChaCha8Rng) -> CheckpointView {
    let records = (0..2 * n_pairs as u64)
        .map(|id| ParticipantRecord {
            id,
            arrival: (id / 2) as f64,
            treatment: id % 2 == 0,
            covariates: vec![0.0],
            outcome: Outcome::Gaussian { y: 0.1 + rng.sample::<f64, _>(StandardNormal) },
            true_group: None,
            true_cate: None,
        })
        .collect();
    CheckpointView {
        checkpoint: Checkpoint::Count(2 * n_pairs),
        outcome_kind: OutcomeKind::Gaussian,
        recruitment: RecruitmentModel::PairedSteps,
        records,
    }
}

#[test]
fn criterion_07_weighted_statistic_identities() {
    let mut rng = rng_from(1007);

    let mut worst_unit: f64 = 0.0;
    for _ in 0..100 {
        let view = random_gaussian_view(rng.random_range(5..150), &mut rng);
        let w = vec![1.0; view.records.len()];
        let a = weighted_z(&view, &w, 2.0, TestKind::OfZ).value;
        let b = unweighted_z(&view, 2.0, TestKind::OfZ).value;
        worst_unit = worst_unit.max((a - b).abs());
    }
    let unit_ok = worst_unit <= 1e-12;

    let mut worst_max: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..300);
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().max(1e-3)).collect();
        let sw: f64 = w.iter().sum();
        let swz: f64 = z.iter().zip(&w).map(|(x, y)| x * y).sum();
        let closed = swz * swz / (2.0 * sw);
        worst_max = worst_max.max((maxsprt(&z, &w).value - closed).abs());
    }
    let max_ok = worst_max <= 1e-10;

    // hard 0/1 weights from the ground truth reduce to the plain statistic
    // over the flagged subset, with no tolerance at all
    let mut subset_ok = true;
    for seed in 0..20 {
        let scenario = GaussianScenario {
            n_participants: 400,
            theta1: 1.0,
            checkpoints: vec![400],
            ..GaussianScenario::default()
        };
        let ds = earlystop::simkit::simulate_gaussian(&scenario, 300 + seed).unwrap();
        let view = ds.snapshot_at(Checkpoint::Count(400)).unwrap();
        let wv = oracle_weights(&view, HarmDirection::IncreaseHarmful).unwrap();
        let aligned = wv.aligned(&view).unwrap();
        let sub = CheckpointView {
            checkpoint: view.checkpoint,
            outcome_kind: view.outcome_kind,
            recruitment: view.recruitment,
            records: view
                .records
                .iter()
                .zip(&aligned)
                .filter(|&(_, &w)| w == 1.0)
                .map(|(r, _)| r.clone())
                .collect(),
        };
        let masked = weighted_z(&view, &aligned, 2.0, TestKind::OfZ).value;
        let subset = unweighted_z(&sub, 2.0, TestKind::OfZ).value;
        subset_ok &= masked == subset;
    }

    let pass = unit_ok && max_ok && subset_ok;
    report(
        7,
        pass,
        &format!(
            "unit-weight gap {worst_unit:.2e} (<= 1e-12), closed-form gap {worst_max:.2e} \
             (<= 1e-10), subset identity exact: {subset_ok}"
        ),
    );
    assert!(pass);
}

fn breslow_lpl(rows: &[(f64, bool, bool, f64)], beta: f64) -> f64 {
    let mut lpl = 0.0;
    for &(t_i, event, treated, w_i) in rows {
        if !event {
            continue;
        }
        let risk: f64 = rows
            .iter()
            .filter(|&&(t_j, _, _, _)| t_j >= t_i)
            .map(|&(_, _, tr, w)| w * if tr { beta.exp() } else { 1.0 })
            .sum();
        lpl += w_i * (beta * f64::from(u8::from(treated)) - risk.ln());
    }
    lpl
}

#[test]
fn criterion_08_cox_fit_equals_brute_force_maximization() {
    let mut rng = rng_from(1008);
    let mut worst: f64 = 0.0;
    for fixture in 0..20 {
        let n = rng.random_range(12..=20);
        let records: Vec<ParticipantRecord> = (0..n as u64)
            .map(|id| ParticipantRecord {
                id,
                arrival: 0.0,
                treatment: id % 2 == 0,
                covariates: vec![0.0],
                outcome: Outcome::Tte {
                    time: 0.05 + 30.0 * rng.random::<f64>(),
                    event: id < 4 || rng.random::<f64>() < 0.6,
                },
                true_group: None,
                true_cate: None,
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
        let view = CheckpointView {
            checkpoint: Checkpoint::Month(1e9),
            outcome_kind: OutcomeKind::Tte,
            recruitment: RecruitmentModel::Accrual {
                accrual_months: 1.0,
                study_months: Some(1e9),
            },
            records,
        };
        let fit = cox_fit(&view, &weights).unwrap();
        assert!(fit.converged, "fixture {fixture} did not converge");

        let rows: Vec<(f64, bool, bool, f64)> = view
            .records
            .iter()
            .zip(&weights)
            .map(|(r, &w)| {
                let (t, e) = r.tte();
                (t, e, r.treatment, w)
            })
            .collect();
        let step = 1e-4;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=(8.0 / step) as usize {
            let beta = -4.0 + i as f64 * step;
            let lpl = breslow_lpl(&rows, beta);
            if lpl > best.0 {
                best = (lpl, beta);
            }
        }
        assert!(best.1.abs() < 3.9, "fixture {fixture} grid maximum at the edge");
        worst = worst.max((fit.log_hr - best.1).abs());
    }
    let pass = worst <= 1e-3;
    report(8, pass, &format!("worst |newton - grid| over 20 fixtures: {worst:.2e} (<= 1e-3)"));
    assert!(pass, "worst deviation {worst}");
}

#[test]
fn criterion_09_event_simulator_matches_the_survival_law() {
    let scenario = TteScenario {
        n_participants: 48_000,
        minority_prob: Some(0.5),
        theta0: 0.12,
        theta1: 0.06,
        dropout_annual_hazard: 0.0,
        ..TteScenario::default()
    };
    let ds = simulate_tte(&scenario, 1009).unwrap();
    let mut worst: f64 = 0.0;
    for (treated, in_group, rate) in [
        (false, false, 0.1),
        (false, true, 0.1),
        (true, false, 0.12),
        (true, true, 0.06),
    ] {
        let mut times: Vec<f64> = ds
            .records()
            .iter()
            .filter(|r| r.treatment == treated && r.true_group == Some(i64::from(in_group)))
            .map(|r| r.tte().0)
            .collect();
        assert!(times.len() >= 10_000, "cell holds {}", times.len());
        times.truncate(10_000);
        times.sort_by(f64::total_cmp);
        let n = times.len() as f64;
        let mut sup: f64 = 0.0;
        for (i, t) in times.iter().enumerate() {
            let cdf = 1.0 - (-rate * t).exp();
            sup = sup.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
        }
        worst = worst.max(sup);
    }
    let pass = worst <= 0.02;
    report(9, pass, &format!("worst cell sup-norm {worst:.4} over 10^4 draws (<= 0.02)"));
    assert!(pass, "sup-norm {worst}");
}

#[test]
fn criterion_10_weighting_also_wins_on_event_outcomes() {
    let started = Instant::now();
    let reps = 200;
    let scenario = Scenario::Tte(TteScenario {
        n_participants: 2000,
        theta0: 0.12,
        theta1: 0.06,
        minority_k: 2,
        ..TteScenario::default()
    });
    let tte_config = ClashConfig {
        delta: 0.05,
        estimator: EstimatorKind::TteCellHazard,
        ..ClashConfig::default()
    };
    let methods = [
        MethodSpec { name: "clash".into(), mode: Mode::Clash, config: tte_config.clone() },
        MethodSpec { name: "homog".into(), mode: Mode::Homogeneous, config: tte_config },
    ];
    let summary = run_replications(&scenario, "c10", &methods, reps, 1010).unwrap();
    let p_clash = summary.any_stop_prob("clash").unwrap();
    let p_homog = summary.any_stop_prob("homog").unwrap();
    let (gap, ci_lo, _) = any_gap(&summary, "clash", "homog");
    let elapsed = started.elapsed().as_secs_f64();

    let pass = gap >= 0.10 && ci_lo > 0.0;
    report(
        10,
        pass,
        &format!(
            "weighted {p_clash:.3} vs pooled {p_homog:.3} on a 25% harmed subgroup: \
             gap {gap:.3} (need >= 0.10, ci low {ci_lo:.3}) in {elapsed:.1}s"
        ),
    );
    assert!(pass, "gap {gap} ci low {ci_lo}");
}

#[test]
fn criterion_11_mixture_test_is_always_valid() {
    let reps = 2000;
    let horizon = 2000;
    let threshold = -(0.05f64.ln());
    let mut rng = rng_from(1011);
    let mut stops = 0;
    for _ in 0..reps {
        let diffs: Vec<f64> = (0..horizon)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0f64.sqrt())
            .collect();
        let w = vec![1.0; horizon];
        let crossed =
            (1..=horizon).any(|i| msprt(&diffs[..i], &w[..i], 1.0, 0.0, 1.0).value > threshold);
        stops += usize::from(crossed);
    }
    let rate = stops as f64 / reps as f64;
    let bound = mc_bound(0.05, reps);
    let pass = rate <= bound;
    report(
        11,
        pass,
        &format!("continuous-monitoring null rejection {rate:.4} (<= {bound:.4})"),
    );
    assert!(pass, "rejection {rate} above {bound}");
}

#[test]
fn criterion_12_simulation_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: &str, out: &std::path::Path| {
        let status = Command::new(bin())
            .args([
                "--jobs", jobs, "simulate", "--outcome", "gaussian", "--n", "400", "--dim", "3",
                "--minority-k", "1", "--theta0", "0", "--theta1", "0.8", "--checkpoints",
                "100,200", "--reps", "10", "--seed", "77", "--methods", "clash,homog", "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let serial = run("1", &dir.path().join("serial.csv"));
    let parallel = run("4", &dir.path().join("parallel.csv"));
    let again = run("4", &dir.path().join("again.csv"));
    let pass = serial == parallel && parallel == again;
    report(
        12,
        pass,
        &format!(
            "byte-identical across --jobs 1/4 and across reruns: {} ({} bytes)",
            pass,
            serial.len()
        ),
    );
    assert!(pass);
}
