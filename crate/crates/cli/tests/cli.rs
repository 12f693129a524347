//! Behavior of the binary itself: exit codes, stream discipline, and the
//! report pipeline over real output files.

use std::io::Write;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_earlystop")
}

// Paired rows with a violent treated-arm shift; any reasonable bound
// trips at the halfway look. The wiggle keeps the variance estimate
// away from zero.
fn harm_csv(n_pairs: usize) -> String {
    let mut out = String::from("id,t,d,x1,y\n");
    for p in 0..n_pairs {
        let x = p % 2;
        let t_y = 5.0 + 0.1 * (p % 5) as f64;
        let c_y = 0.1 * (p % 3) as f64;
        out.push_str(&format!("{},{},1,{},{}\n", 2 * p, p, x, t_y));
        out.push_str(&format!("{},{},0,{},{}\n", 2 * p + 1, p, x, c_y));
    }
    out
}

// Noisy but balanced arms: the residues of 7p and 3p mod 11 cycle over
// the same set, so the mean difference vanishes over whole cycles.
fn quiet_csv(n_pairs: usize) -> String {
    let mut out = String::from("id,t,d,x1,y\n");
    for p in 0..n_pairs {
        let x = p % 2;
        let t_y = 0.01 * ((7 * p) % 11) as f64;
        let c_y = 0.01 * ((3 * p) % 11) as f64;
        out.push_str(&format!("{},{},1,{},{}\n", 2 * p, p, x, t_y));
        out.push_str(&format!("{},{},0,{},{}\n", 2 * p + 1, p, x, c_y));
    }
    out
}

fn write_temp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    path
}

#[test]
fn monitor_exits_ten_when_harm_crosses_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_temp(&dir, "harm.csv", &harm_csv(200));
    let out = Command::new(bin())
        .args(["monitor", "--data"])
        .arg(&data)
        .args(["--outcome", "gaussian", "--checkpoints", "200", "--mode", "homogeneous"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(10), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stopped for harm"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.ends_with(",1,0"), "expected a stopping row, got {row}");
}

#[test]
fn monitor_exits_zero_when_nothing_crosses() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_temp(&dir, "quiet.csv", &quiet_csv(200));
    let out = Command::new(bin())
        .args(["monitor", "--data"])
        .arg(&data)
        .args(["--outcome", "gaussian", "--checkpoints", "100,200", "--mode", "homogeneous"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3, "header plus one row per checkpoint");
}

#[test]
fn clash_mode_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_temp(&dir, "harm.csv", &harm_csv(100));
    let out = Command::new(bin())
        .args(["monitor", "--data"])
        .arg(&data)
        .args(["--outcome", "gaussian", "--checkpoints", "100", "--mode", "clash"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn corrupt_data_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_temp(&dir, "bad.csv", "id,t,d,x1,y\n0,0,definitely,1,2\n");
    let out = Command::new(bin())
        .args(["monitor", "--data"])
        .arg(&data)
        .args(["--outcome", "gaussian", "--checkpoints", "1", "--mode", "homogeneous"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_grid_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_temp(&dir, "grid.conf", "bogus = 1, 2\n");
    let out = Command::new(bin())
        .args(["simulate", "--grid"])
        .arg(&grid)
        .args(["--reps", "2", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn boundary_rejects_fractions_outside_the_unit_interval() {
    for fractions in ["0,0.5", "0.5,0.4", "0.5,1.5"] {
        let out = Command::new(bin())
            .args(["boundary", "--alpha", "0.05", "--fractions", fractions])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "fractions {fractions} should be rejected");
    }
}

#[test]
fn simulate_stdout_is_pure_csv() {
    let out = Command::new(bin())
        .args([
            "simulate", "--outcome", "gaussian", "--n", "300", "--checkpoints", "150,300",
            "--reps", "5", "--seed", "3", "--methods", "homog",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "scenario_id,theta0,theta1,k,d,method,checkpoint,stops,reps,stop_prob,ci_lo,ci_hi"
    );
    let fields = header.split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), fields, "ragged row: {line}");
    }
    // progress goes to stderr, never stdout
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));
}

#[test]
fn weights_emit_cate_lists_fold_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_temp(&dir, "harm.csv", &harm_csv(200));
    let out = Command::new(bin())
        .args(["weights", "--data"])
        .arg(&data)
        .args([
            "--outcome", "gaussian", "--checkpoint", "400", "--mode", "clash", "--seed", "5",
            "--emit-cate",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next().unwrap(), "id,fold,tau_hat,sigma_hat");
    assert_eq!(lines.count(), 400);
}

#[test]
fn report_pivots_simulation_output_and_diffs_methods() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    let status = Command::new(bin())
        .args([
            "simulate", "--outcome", "gaussian", "--n", "400", "--theta1", "0.8", "--checkpoints",
            "200,400", "--reps", "10", "--seed", "9", "--methods", "clash,homog", "--out",
        ])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());

    let out = Command::new(bin())
        .args(["report", "--data"])
        .arg(&sim)
        .args(["--diff", "clash,homog"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with("clash,homog,clash_minus_homog"), "header: {header}");
    // two checkpoints plus the any row
    assert_eq!(lines.count(), 3);

    // filtering keeps only the requested checkpoint
    let filtered = Command::new(bin())
        .args(["report", "--data"])
        .arg(&sim)
        .args(["--checkpoint", "any"])
        .output()
        .unwrap();
    assert_eq!(filtered.status.code(), Some(0));
    let text = String::from_utf8(filtered.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().contains(",any,"));
}

#[test]
fn missing_method_in_diff_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    let status = Command::new(bin())
        .args([
            "simulate", "--outcome", "gaussian", "--n", "200", "--checkpoints", "100", "--reps",
            "2", "--seed", "4", "--methods", "homog", "--out",
        ])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(bin())
        .args(["report", "--data"])
        .arg(&sim)
        .args(["--diff", "clash,homog"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
