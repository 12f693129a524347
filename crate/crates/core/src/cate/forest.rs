//! Honest tree ensemble for treatment effect heterogeneity. Each tree
//! draws a subsample without replacement, splits it into a structure half
//! that chooses the tree shape and an estimation half that supplies the
//! leaf effects, so no outcome helps pick the split that will score it.
//! Randomization is assumed balanced (propensity 0.5), so a leaf effect
//! is just the treated-minus-control mean on the estimation half.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::cate::{CateError, CatePrediction, SIGMA_FLOOR};
use crate::data::ParticipantRecord;
use crate::seeds::{derive_seed, rng_from, Stream};
use crate::stats::sample_var;

#[derive(Clone, Copy, Debug)]
pub struct ForestParams {
    pub n_trees: usize,
    pub subsample_ratio: f64,
    pub min_leaf_per_arm: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 200, subsample_ratio: 0.5, min_leaf_per_arm: 10, max_depth: None }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
    Leaf { tau: f64 },
}

// Children are pushed before their parent, so the root is the node grow()
// returned last, not nodes[0].
#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
    root: u32,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = self.root as usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { tau } => return *tau,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    // (feature, threshold bits) of every split, in node order.
    fn split_signature(&self) -> Vec<(usize, u64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, threshold, .. } => Some((*feature, threshold.to_bits())),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ForestModel {
    trees: Vec<Tree>,
    dim: usize,
    /// Per tree: (structure half ids, estimation half ids). Kept so tests
    /// can audit that the two halves never mix.
    pub tree_samples: Vec<(Vec<u64>, Vec<u64>)>,
}

// Column-flattened copy of the training set; everything downstream works
// on indices into these arrays.
struct TrainData {
    xs: Vec<f64>,
    ys: Vec<f64>,
    treated: Vec<bool>,
    ids: Vec<u64>,
    n: usize,
    dim: usize,
}

impl TrainData {
    fn x(&self, i: usize, j: usize) -> f64 {
        self.xs[i * self.dim + j]
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct ArmAgg {
    n1: usize,
    n0: usize,
    s1: f64,
    s0: f64,
}

impl ArmAgg {
    fn zero() -> Self {
        ArmAgg { n1: 0, n0: 0, s1: 0.0, s0: 0.0 }
    }

    fn add(&mut self, data: &TrainData, i: usize) {
        if data.treated[i] {
            self.n1 += 1;
            self.s1 += data.ys[i];
        } else {
            self.n0 += 1;
            self.s0 += data.ys[i];
        }
    }

    fn remove(&mut self, data: &TrainData, i: usize) {
        if data.treated[i] {
            self.n1 -= 1;
            self.s1 -= data.ys[i];
        } else {
            self.n0 -= 1;
            self.s0 -= data.ys[i];
        }
    }

    fn tau(&self) -> Option<f64> {
        if self.n1 == 0 || self.n0 == 0 {
            return None;
        }
        Some(self.s1 / self.n1 as f64 - self.s0 / self.n0 as f64)
    }

    fn total(&self) -> usize {
        self.n1 + self.n0
    }
}

fn best_split(
    data: &TrainData,
    structure: &[usize],
    estimation: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let mut best: Option<BestSplit> = None;
    for j in 0..data.dim {
        let mut s_sorted = structure.to_vec();
        s_sorted.sort_by(|&a, &b| data.x(a, j).total_cmp(&data.x(b, j)));
        let mut e_sorted = estimation.to_vec();
        e_sorted.sort_by(|&a, &b| data.x(a, j).total_cmp(&data.x(b, j)));

        let mut s_left = ArmAgg::zero();
        let mut s_right = ArmAgg::zero();
        for &i in &s_sorted {
            s_right.add(data, i);
        }
        let mut e_left = ArmAgg::zero();
        let mut e_right = ArmAgg::zero();
        for &i in &e_sorted {
            e_right.add(data, i);
        }

        let mut ei = 0usize;
        for w in 0..s_sorted.len().saturating_sub(1) {
            let i = s_sorted[w];
            s_left.add(data, i);
            s_right.remove(data, i);
            let v = data.x(i, j);
            let v_next = data.x(s_sorted[w + 1], j);
            if !(v_next > v) {
                continue; // inside a run of equal values, not a boundary
            }
            let threshold = 0.5 * (v + v_next);
            while ei < e_sorted.len() && data.x(e_sorted[ei], j) <= threshold {
                e_left.add(data, e_sorted[ei]);
                e_right.remove(data, e_sorted[ei]);
                ei += 1;
            }
            let leafy = |a: &ArmAgg| a.n1 >= min_leaf && a.n0 >= min_leaf;
            if !(leafy(&s_left) && leafy(&s_right) && leafy(&e_left) && leafy(&e_right)) {
                continue;
            }
            let (tau_l, tau_r) = match (s_left.tau(), s_right.tau()) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            let nl = s_left.total() as f64;
            let nr = s_right.total() as f64;
            let gain = nl * nr / ((nl + nr) * (nl + nr)) * (tau_l - tau_r) * (tau_l - tau_r);
            if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                best = Some(BestSplit { feature: j, threshold, gain });
            }
        }
    }
    best
}

fn grow(
    data: &TrainData,
    structure: Vec<usize>,
    estimation: Vec<usize>,
    depth: usize,
    fallback_tau: f64,
    params: &ForestParams,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut agg = ArmAgg::zero();
    for &i in &estimation {
        agg.add(data, i);
    }
    let tau_here = agg.tau().unwrap_or(fallback_tau);
    let depth_ok = params.max_depth.map_or(true, |d| depth < d);
    let split = if depth_ok {
        best_split(data, &structure, &estimation, params.min_leaf_per_arm)
    } else {
        None
    };
    match split {
        None => {
            nodes.push(Node::Leaf { tau: tau_here });
            (nodes.len() - 1) as u32
        }
        Some(s) => {
            let (s_l, s_r): (Vec<usize>, Vec<usize>) =
                structure.iter().partition(|&&i| data.x(i, s.feature) <= s.threshold);
            let (e_l, e_r): (Vec<usize>, Vec<usize>) =
                estimation.iter().partition(|&&i| data.x(i, s.feature) <= s.threshold);
            let left = grow(data, s_l, e_l, depth + 1, tau_here, params, nodes);
            let right = grow(data, s_r, e_r, depth + 1, tau_here, params, nodes);
            nodes.push(Node::Split { feature: s.feature, threshold: s.threshold, left, right });
            (nodes.len() - 1) as u32
        }
    }
}

fn build_tree(
    data: &TrainData,
    params: &ForestParams,
    global_tau: f64,
    seed: u64,
) -> (Tree, (Vec<u64>, Vec<u64>)) {
    let mut rng = rng_from(seed);
    let m = ((params.subsample_ratio * data.n as f64).floor() as usize).clamp(2, data.n);
    let mut order: Vec<usize> = (0..data.n).collect();
    order.shuffle(&mut rng);
    order.truncate(m);
    let structure = order[..m / 2].to_vec();
    let estimation = order[m / 2..].to_vec();
    let sample_ids = (
        structure.iter().map(|&i| data.ids[i]).collect(),
        estimation.iter().map(|&i| data.ids[i]).collect(),
    );
    let mut nodes = Vec::new();
    let root = grow(data, structure, estimation, 0, global_tau, params, &mut nodes);
    (Tree { nodes, root }, sample_ids)
}

/// Fits the ensemble. Trees are built in parallel; each tree's randomness
/// comes from a seed derived from the base seed and the tree index, so
/// the result is independent of thread scheduling.
pub fn fit_causal_forest(
    train: &[&ParticipantRecord],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, CateError> {
    if train.is_empty() {
        return Err(CateError::EmptyTrain);
    }
    if params.n_trees == 0 || !(params.subsample_ratio > 0.0 && params.subsample_ratio <= 1.0) {
        return Err(CateError::InsufficientData(
            "forest needs n_trees >= 1 and subsample ratio in (0, 1]".into(),
        ));
    }
    let n = train.len();
    if n < 4 * params.min_leaf_per_arm {
        return Err(CateError::InsufficientData(format!(
            "forest needs at least {} records for min leaf {}, got {n}",
            4 * params.min_leaf_per_arm,
            params.min_leaf_per_arm
        )));
    }
    let dim = train[0].covariates.len();
    let data = TrainData {
        xs: train.iter().flat_map(|r| r.covariates.iter().copied()).collect(),
        ys: train.iter().map(|r| r.y()).collect(),
        treated: train.iter().map(|r| r.treatment).collect(),
        ids: train.iter().map(|r| r.id).collect(),
        n,
        dim,
    };
    let mut whole = ArmAgg::zero();
    for i in 0..n {
        whole.add(&data, i);
    }
    let global_tau = match whole.tau() {
        Some(t) => t,
        None => {
            let arm = if whole.n1 == 0 { "treated" } else { "control" };
            return Err(CateError::MissingArm(arm));
        }
    };
    let built: Vec<(Tree, (Vec<u64>, Vec<u64>))> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| build_tree(&data, params, global_tau, derive_seed(seed, b as u64, Stream::Trees)))
        .collect();
    let mut trees = Vec::with_capacity(built.len());
    let mut tree_samples = Vec::with_capacity(built.len());
    for (t, s) in built {
        trees.push(t);
        tree_samples.push(s);
    }
    Ok(ForestModel { trees, dim, tree_samples })
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> CatePrediction {
        assert_eq!(x.len(), self.dim, "covariate arity mismatch");
        let taus: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let tau_hat = taus.iter().sum::<f64>() / taus.len() as f64;
        let sigma_hat = (sample_var(&taus) / taus.len() as f64).sqrt().max(SIGMA_FLOOR);
        CatePrediction { tau_hat, sigma_hat, fallback: false }
    }

    /// Split layout of every tree, for determinism and honesty audits.
    pub fn split_signatures(&self) -> Vec<Vec<(usize, u64)>> {
        self.trees.iter().map(|t| t.split_signature()).collect()
    }
}
