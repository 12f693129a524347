//! Group-sequential boundary computation by recursive numerical
//! integration of the joint null law of sequential z statistics.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seeds::{rng_from, Stream};
use crate::stats::norm_pdf;

pub const MAX_LOOKS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryFamily {
    /// Bounds of shape C / sqrt(t_k): very conservative early looks.
    ObrienFleming,
    /// One constant z bound across looks.
    Pocock,
}

/// Per-look z thresholds calibrated so the null probability of ever
/// crossing is alpha.
///
/// `info_fractions`/`bounds` cover the looks the caller listed. When
/// `includes_final_analysis` is false those are interim looks only and a
/// final analysis at fraction 1.0 is appended to the spending design;
/// `design_fractions`/`design_bounds` always hold the full design the
/// crossing probability was calibrated over.
#[derive(Clone, Debug)]
pub struct BoundarySchedule {
    pub info_fractions: Vec<f64>,
    pub bounds: Vec<f64>,
    pub design_fractions: Vec<f64>,
    pub design_bounds: Vec<f64>,
    pub family: BoundaryFamily,
    pub alpha: f64,
    pub includes_final_analysis: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoundaryError {
    #[error("at least one information fraction is required")]
    Empty,
    #[error("information fractions must be strictly increasing")]
    NotIncreasing,
    #[error("information fractions must lie in (0, 1]")]
    OutOfRange,
    #[error("at most {MAX_LOOKS} looks are supported")]
    TooManyLooks,
    #[error("alpha must lie in (0, 1)")]
    InvalidAlpha,
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        ws[i] = w;
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn map_to(interval: (f64, f64), base: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let mid = 0.5 * (interval.0 + interval.1);
    let half = 0.5 * (interval.1 - interval.0);
    let nodes = base.0.iter().map(|x| mid + half * x).collect();
    let weights = base.1.iter().map(|w| half * w).collect();
    (nodes, weights)
}

/// Null probability that the running-sum process exceeds the barrier
/// `c[k]` (in cumulative-sum space, variance t_k at look k) at any look.
/// Computed by propagating the sub-density of the surviving paths from
/// look to look with a Gaussian increment kernel.
fn crossing_prob(c: &[f64], t: &[f64], base: &(Vec<f64>, Vec<f64>)) -> f64 {
    let lo = -9.0 * t.last().unwrap().sqrt();
    let sd0 = t[0].sqrt();
    let (mut nodes, mut node_w) = map_to((lo, c[0]), base);
    let mut g: Vec<f64> = nodes.iter().map(|u| norm_pdf(u / sd0) / sd0).collect();
    for k in 1..t.len() {
        let sd = (t[k] - t[k - 1]).sqrt();
        let (next_nodes, next_w) = map_to((lo, c[k]), base);
        let mut next_g = vec![0.0; next_nodes.len()];
        for (j, (&u, &gw)) in nodes.iter().zip(&node_w).enumerate() {
            let mass = g[j] * gw;
            if mass == 0.0 {
                continue;
            }
            for (i, &v) in next_nodes.iter().enumerate() {
                next_g[i] += mass * norm_pdf((v - u) / sd) / sd;
            }
        }
        nodes = next_nodes;
        node_w = next_w;
        g = next_g;
    }
    let survive: f64 = g.iter().zip(&node_w).map(|(gi, wi)| gi * wi).sum();
    1.0 - survive
}

fn barrier(family: BoundaryFamily, constant: f64, t: &[f64]) -> Vec<f64> {
    match family {
        // z bound C/sqrt(t_k) is the constant C in cumulative-sum space
        BoundaryFamily::ObrienFleming => t.iter().map(|_| constant).collect(),
        BoundaryFamily::Pocock => t.iter().map(|tk| constant * tk.sqrt()).collect(),
    }
}

/// Bisection for the family constant whose crossing probability is alpha.
fn constant_for(
    family: BoundaryFamily,
    t: &[f64],
    alpha: f64,
    base: &(Vec<f64>, Vec<f64>),
    bracket: (f64, f64),
) -> f64 {
    let f = |cst: f64| crossing_prob(&barrier(family, cst, t), t, base);
    let (mut lo, mut hi) = bracket;
    // crossing probability decreases in the constant; widen until bracketed
    let mut guard = 0;
    while f(lo) < alpha && guard < 60 {
        lo -= 0.25;
        guard += 1;
    }
    guard = 0;
    while f(hi) > alpha && guard < 60 {
        hi += 0.25;
        guard += 1;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Computes per-look bounds for the requested family so that the overall
/// null crossing probability equals alpha. The integration grid is refined
/// until the constant moves by less than 1e-3 between refinements.
pub fn compute_boundary(
    alpha: f64,
    info_fractions: &[f64],
    family: BoundaryFamily,
    includes_final_analysis: bool,
) -> Result<BoundarySchedule, BoundaryError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundaryError::InvalidAlpha);
    }
    if info_fractions.is_empty() {
        return Err(BoundaryError::Empty);
    }
    if info_fractions.len() > MAX_LOOKS {
        return Err(BoundaryError::TooManyLooks);
    }
    for (i, &f) in info_fractions.iter().enumerate() {
        if !(f > 0.0 && f <= 1.0) {
            return Err(BoundaryError::OutOfRange);
        }
        if i > 0 && f <= info_fractions[i - 1] {
            return Err(BoundaryError::NotIncreasing);
        }
    }
    // the computation is pure and the harness asks for the same design
    // thousands of times, so completed schedules are memoized
    type MemoKey = (u64, Vec<u64>, BoundaryFamily, bool);
    static MEMO: OnceLock<Mutex<HashMap<MemoKey, BoundarySchedule>>> = OnceLock::new();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    let key: MemoKey = (
        alpha.to_bits(),
        info_fractions.iter().map(|f| f.to_bits()).collect(),
        family,
        includes_final_analysis,
    );
    if let Some(hit) = memo.lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }

    let mut design: Vec<f64> = info_fractions.to_vec();
    if !includes_final_analysis && *design.last().unwrap() < 1.0 {
        design.push(1.0);
    }

    let mut constant = f64::NAN;
    let mut bracket = (0.2, 6.0);
    for npts in [512usize, 1024, 2048] {
        let base = legendre_nodes(npts);
        let refined = constant_for(family, &design, alpha, &base, bracket);
        if constant.is_finite() && (refined - constant).abs() < 1e-3 {
            constant = refined;
            break;
        }
        constant = refined;
        bracket = (refined - 0.05, refined + 0.05);
    }

    let design_bounds: Vec<f64> = match family {
        BoundaryFamily::ObrienFleming => design.iter().map(|t| constant / t.sqrt()).collect(),
        BoundaryFamily::Pocock => design.iter().map(|_| constant).collect(),
    };
    let bounds = design_bounds[..info_fractions.len()].to_vec();
    let schedule = BoundarySchedule {
        info_fractions: info_fractions.to_vec(),
        bounds,
        design_fractions: design,
        design_bounds,
        family,
        alpha,
        includes_final_analysis,
    };
    memo.lock().unwrap().insert(key, schedule.clone());
    Ok(schedule)
}

/// Monte Carlo estimate of the null crossing probability of a schedule's
/// full design, for cross-checking the recursion.
pub fn mc_crossing_prob(schedule: &BoundarySchedule, paths: usize, seed: u64) -> f64 {
    let t = &schedule.design_fractions;
    let c: Vec<f64> = schedule
        .design_bounds
        .iter()
        .zip(t)
        .map(|(b, tk)| b * tk.sqrt())
        .collect();
    let mut crossed = 0usize;
    let mut rng = rng_from(crate::seeds::derive_seed(seed, 0, Stream::Calibration));
    for _ in 0..paths {
        let mut sum = 0.0;
        let mut prev_t = 0.0;
        for (k, &tk) in t.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            sum += (tk - prev_t).sqrt() * z;
            prev_t = tk;
            if sum > c[k] {
                crossed += 1;
                break;
            }
        }
    }
    crossed as f64 / paths as f64
}
