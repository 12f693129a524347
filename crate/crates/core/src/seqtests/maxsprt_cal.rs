//! Monte Carlo calibration of the MaxSPRT critical value, with a
//! write-once disk cache keyed by every calibration input.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::TestError;
use crate::seeds::{derive_seed, rng_from, Stream};

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    pub paths: usize,
    /// None disables caching entirely.
    pub cache_dir: Option<PathBuf>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { paths: 100_000, cache_dir: default_cache_dir() }
    }
}

fn default_cache_dir() -> Option<PathBuf> {
    if let Some(dir) = std::env::var_os("EARLYSTOP_CACHE_DIR") {
        return Some(PathBuf::from(dir));
    }
    Some(std::env::temp_dir().join("earlystop-calibration"))
}

fn cache_path(dir: &Path, alpha: f64, max_n: usize, paths: usize, seed: u64) -> PathBuf {
    dir.join(format!("maxsprt-a{alpha:.6}-n{max_n}-p{paths}-s{seed}.txt"))
}

fn read_cache(path: &Path) -> Option<f64> {
    let raw = fs::read_to_string(path).ok()?;
    let v: f64 = raw.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

fn write_cache(path: &Path, value: f64) {
    // best effort, write-once: a temp file renamed into place so concurrent
    // calibrations never observe a partial write
    let Some(dir) = path.parent() else { return };
    if fs::create_dir_all(dir).is_err() {
        return;
    }
    let tmp = dir.join(format!(
        "{}.tmp-{}",
        path.file_name().unwrap_or_default().to_string_lossy(),
        std::process::id()
    ));
    if fs::write(&tmp, format!("{value:.17e}\n")).is_ok() {
        let _ = fs::rename(&tmp, path);
    }
}

/// Critical value c such that under i.i.d. standard normal differences the
/// running MaxSPRT statistic exceeds c somewhere in n = 1..=max_n with
/// probability alpha. Deterministic given the seed; cached on disk.
pub fn maxsprt_critical_value(alpha: f64, max_n: usize, seed: u64) -> Result<f64, TestError> {
    maxsprt_critical_value_with(alpha, max_n, seed, &CalibrationOptions::default())
}

pub fn maxsprt_critical_value_with(
    alpha: f64,
    max_n: usize,
    seed: u64,
    options: &CalibrationOptions,
) -> Result<f64, TestError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(TestError::InvalidConfig("alpha must be positive".into()));
    }
    if max_n == 0 {
        return Err(TestError::InvalidConfig("max_n must be at least 1".into()));
    }
    if options.paths == 0 {
        return Err(TestError::InvalidConfig("calibration needs at least one path".into()));
    }
    if alpha >= 1.0 {
        // the statistic is nonnegative, so a zero threshold always stops
        return Ok(0.0);
    }

    let cache_file = options
        .cache_dir
        .as_deref()
        .map(|dir| cache_path(dir, alpha, max_n, options.paths, seed));
    if let Some(v) = cache_file.as_deref().and_then(read_cache) {
        return Ok(v);
    }

    let mut maxima: Vec<f64> = (0..options.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(derive_seed(seed, i as u64, Stream::Calibration));
            let mut sum = 0.0;
            let mut best = 0.0f64;
            for n in 1..=max_n {
                let z: f64 = rng.sample(StandardNormal);
                sum += z;
                let stat = sum * sum / (2.0 * n as f64);
                if stat > best {
                    best = stat;
                }
            }
            best
        })
        .collect();
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // smallest threshold whose empirical exceedance rate stays at or below alpha
    let exceed = (alpha * options.paths as f64).floor() as usize;
    let idx = options.paths - exceed.min(options.paths - 1) - 1;
    let c = maxima[idx];

    if let Some(path) = cache_file.as_deref() {
        write_cache(path, c);
    }
    Ok(c)
}
