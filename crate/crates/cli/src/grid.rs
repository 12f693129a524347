//! Scenario grids for `simulate`. A grid file holds `key = v1,v2,...`
//! lines; every combination of listed values becomes one scenario, with
//! unlisted keys falling back to the command-line flags. Checkpoints are
//! one space-separated list shared by the whole grid.

use earlystop::simkit::GaussianScenario;
use earlystop::survival::TteScenario;

use crate::{CliError, OutcomeArg, Scenario, SimulateArgs};

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn count_checkpoints(values: &[f64]) -> Result<Vec<usize>, CliError> {
    values
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 || !(v >= 1.0) {
                Err(usage(format!("checkpoints: participant counts must be positive integers, got {v}")))
            } else {
                Ok(v as usize)
            }
        })
        .collect()
}

fn build_scenario(
    outcome: OutcomeArg,
    n: Option<usize>,
    dim: Option<usize>,
    minority_k: Option<usize>,
    minority_prob: Option<f64>,
    theta0: Option<f64>,
    theta1: Option<f64>,
    checkpoints: Option<&[f64]>,
) -> Result<Scenario, CliError> {
    match outcome {
        OutcomeArg::Gaussian => {
            let defaults = GaussianScenario::default();
            Ok(Scenario::Gaussian(GaussianScenario {
                n_participants: n.unwrap_or(defaults.n_participants),
                dim: dim.unwrap_or(defaults.dim),
                minority_k: minority_k.unwrap_or(defaults.minority_k),
                minority_prob,
                theta0: theta0.unwrap_or(defaults.theta0),
                theta1: theta1.unwrap_or(defaults.theta1),
                noise_sd: defaults.noise_sd,
                checkpoints: match checkpoints {
                    Some(values) => count_checkpoints(values)?,
                    None => defaults.checkpoints,
                },
            }))
        }
        OutcomeArg::Tte => {
            let defaults = TteScenario::default();
            Ok(Scenario::Tte(TteScenario {
                n_participants: n.unwrap_or(defaults.n_participants),
                dim: dim.unwrap_or(defaults.dim),
                minority_k: minority_k.unwrap_or(defaults.minority_k),
                minority_prob,
                theta0: theta0.unwrap_or(defaults.theta0),
                theta1: theta1.unwrap_or(defaults.theta1),
                checkpoint_months: checkpoints.map_or(defaults.checkpoint_months.clone(), <[f64]>::to_vec),
                ..defaults
            }))
        }
    }
}

pub(crate) fn single_scenario(args: &SimulateArgs) -> Result<Scenario, CliError> {
    build_scenario(
        args.outcome,
        args.n,
        args.dim,
        args.minority_k,
        args.minority_prob,
        args.theta0,
        args.theta1,
        args.checkpoints.as_deref(),
    )
}

// Values a grid file can sweep. Each field is the list of values its key
// takes in the product; a missing key collapses to the matching flag.
struct GridAxes {
    theta0: Vec<Option<f64>>,
    theta1: Vec<Option<f64>>,
    k: Vec<Option<usize>>,
    d: Vec<Option<usize>>,
    n: Vec<Option<usize>>,
    minority_prob: Vec<Option<f64>>,
    checkpoints: Option<Vec<f64>>,
}

fn parse_list<T: std::str::FromStr>(raw: &str, line_no: usize, key: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(str::trim)
        .map(|tok| {
            tok.parse::<T>().map_err(|_| {
                usage(format!("grid line {line_no}: cannot parse `{tok}` for key `{key}`"))
            })
        })
        .collect()
}

pub(crate) fn expand(text: &str, args: &SimulateArgs) -> Result<Vec<(String, Scenario)>, CliError> {
    let mut axes = GridAxes {
        theta0: vec![args.theta0],
        theta1: vec![args.theta1],
        k: vec![args.minority_k],
        d: vec![args.dim],
        n: vec![args.n],
        minority_prob: vec![args.minority_prob],
        checkpoints: args.checkpoints.clone(),
    };
    let mut seen: Vec<String> = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("grid line {line_no}: expected `key = values`")))?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|s| s == key) {
            return Err(usage(format!("grid line {line_no}: duplicate key `{key}`")));
        }
        seen.push(key.to_string());
        match key {
            "theta0" => axes.theta0 = parse_list::<f64>(value, line_no, key)?.into_iter().map(Some).collect(),
            "theta1" => axes.theta1 = parse_list::<f64>(value, line_no, key)?.into_iter().map(Some).collect(),
            "k" => axes.k = parse_list::<usize>(value, line_no, key)?.into_iter().map(Some).collect(),
            "d" => axes.d = parse_list::<usize>(value, line_no, key)?.into_iter().map(Some).collect(),
            "n" => axes.n = parse_list::<usize>(value, line_no, key)?.into_iter().map(Some).collect(),
            "minority_prob" => {
                axes.minority_prob =
                    parse_list::<f64>(value, line_no, key)?.into_iter().map(Some).collect();
            }
            "checkpoints" => {
                let values = value
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| {
                            usage(format!("grid line {line_no}: cannot parse checkpoint `{tok}`"))
                        })
                    })
                    .collect::<Result<Vec<f64>, CliError>>()?;
                if values.is_empty() {
                    return Err(usage(format!("grid line {line_no}: checkpoints list is empty")));
                }
                axes.checkpoints = Some(values);
            }
            other => {
                return Err(usage(format!(
                    "grid line {line_no}: unknown key `{other}` (expected theta0, theta1, k, d, n, minority_prob, or checkpoints)"
                )));
            }
        }
    }

    let mut scenarios = Vec::new();
    for &t0 in &axes.theta0 {
        for &t1 in &axes.theta1 {
            for &k in &axes.k {
                for &d in &axes.d {
                    for &n in &axes.n {
                        for &mp in &axes.minority_prob {
                            let scenario = build_scenario(
                                args.outcome,
                                n,
                                d,
                                k,
                                mp,
                                t0,
                                t1,
                                axes.checkpoints.as_deref(),
                            )?;
                            let id = format!("s{:03}", scenarios.len());
                            scenarios.push((id, scenario));
                        }
                    }
                }
            }
        }
    }
    Ok(scenarios)
}
