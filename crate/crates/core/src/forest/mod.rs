//! Random forest regression on log2(speedup).
//!
//! Trees are grown greedily (CART) on bootstrap resamples, drawing a fresh
//! random subset of features at every node. The ensemble predicts
//! `2^(mean leaf value)` and the tuning decision is `prediction > 1`.

mod io;

pub use io::{load, parse, save, to_text};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::access::{FeatureVector, FEATURE_NAMES, NUM_FEATURES};
use crate::dataset::{mix_seed, LabeledInstance};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Training target for infeasible (speedup 0) rows and floor for tiny speedups.
pub const LOG_SPEEDUP_FLOOR: f64 = -10.0;

/// Relative slack under which two split costs count as equal.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hyperparams {
    pub num_trees: usize,
    pub features_per_node: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { num_trees: 20, features_per_node: 4, max_depth: None, min_samples_leaf: 1, bootstrap: true, seed: 1 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::Config("num_trees must be at least 1".into()));
        }
        if !(1..=NUM_FEATURES).contains(&self.features_per_node) {
            return Err(Error::Config(format!("features_per_node must be in 1..={NUM_FEATURES}")));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// Tree node in pre-order storage. The left child of a split at index `k`
/// is `k + 1`; the right child index is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64; NUM_FEATURES]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, right } => {
                    k = if x[feature] <= threshold { k + 1 } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { right, .. } => 1 + go(nodes, k + 1).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub hyperparams: Hyperparams,
    pub schema: Vec<String>,
}

/// Regression target for a labeled speedup.
pub fn log_target(speedup: f64) -> f64 {
    if speedup > 0.0 {
        speedup.log2().max(LOG_SPEEDUP_FLOOR)
    } else {
        LOG_SPEEDUP_FLOOR
    }
}

impl Forest {
    /// Predicted speedup, `2^(mean leaf value)`.
    pub fn predict(&self, features: &FeatureVector) -> f64 {
        self.predict_array(&features.to_array())
    }

    pub fn predict_array(&self, x: &[f64; NUM_FEATURES]) -> f64 {
        let mut leaves: Vec<f64> = self.trees.iter().map(|t| t.leaf_value(x)).collect();
        // Sorting makes the sum independent of tree order.
        leaves.sort_by(f64::total_cmp);
        let mean = leaves.iter().sum::<f64>() / leaves.len() as f64;
        mean.exp2()
    }

    pub fn decide(&self, features: &FeatureVector) -> bool {
        self.predict(features) > 1.0
    }

    pub fn check_schema(&self) -> Result<()> {
        if self.schema.len() != NUM_FEATURES || self.schema.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
            return Err(Error::Schema(format!("model features [{}] differ from the expected order", self.schema.join(","))));
        }
        Ok(())
    }

    /// How often each feature is used as a split.
    pub fn split_counts(&self) -> [usize; NUM_FEATURES] {
        let mut counts = [0; NUM_FEATURES];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, .. } = n {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }
}

fn matrix(rows: &[LabeledInstance]) -> (Vec<[f64; NUM_FEATURES]>, Vec<f64>) {
    rows.iter().map(|r| (r.features.to_array(), log_target(r.speedup))).unzip()
}

fn check_inputs(x: &[[f64; NUM_FEATURES]], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Training(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Training(format!("need at least 2 rows, got {}", x.len())));
    }
    if let Some(i) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training(format!("row {i} has a non-finite feature")));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Training(format!("row {i} has a non-finite target")));
    }
    Ok(())
}

pub fn train(rows: &[LabeledInstance], hp: &Hyperparams) -> Result<Forest> {
    train_with(rows, hp, Execution::default())
}

pub fn train_with(rows: &[LabeledInstance], hp: &Hyperparams, exec: Execution) -> Result<Forest> {
    if let Some(r) = rows.iter().find(|r| !(r.speedup >= 0.0 && r.speedup.is_finite())) {
        return Err(Error::Training(format!("speedup {} is not a finite non-negative number", r.speedup)));
    }
    let (x, y) = matrix(rows);
    fit(&x, &y, hp, exec)
}

/// Fits a forest to raw feature rows and log-speedup targets.
pub fn fit(x: &[[f64; NUM_FEATURES]], y: &[f64], hp: &Hyperparams, exec: Execution) -> Result<Forest> {
    Ok(fit_with_bags(x, y, hp, exec)?.0)
}

fn fit_with_bags(
    x: &[[f64; NUM_FEATURES]],
    y: &[f64],
    hp: &Hyperparams,
    exec: Execution,
) -> Result<(Forest, Vec<Vec<usize>>)> {
    hp.validate()?;
    check_inputs(x, y)?;
    let grown = par::map_range(exec, hp.num_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hp.seed, t as u64));
        let n = x.len();
        let mut sample: Vec<usize> = if hp.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
        sample.sort_unstable();
        let mut b = Builder { x, y, hp, rng, nodes: Vec::new() };
        b.grow(sample.clone(), 0);
        (Tree { nodes: b.nodes }, sample)
    });
    let (trees, bags) = grown.into_iter().unzip();
    let schema = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    Ok((Forest { trees, hyperparams: *hp, schema }, bags))
}

/// Trains and also returns the out-of-bag mean squared error (in log2
/// space) of the first `k` trees, for `k = 1..=num_trees`. Rows that are
/// in-bag for all of the first `k` trees are left out of that entry.
pub fn train_with_oob(rows: &[LabeledInstance], hp: &Hyperparams, exec: Execution) -> Result<(Forest, Vec<f64>)> {
    let (x, y) = matrix(rows);
    let (forest, bags) = fit_with_bags(&x, &y, hp, exec)?;
    let n = x.len();
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    let mut curve = Vec::with_capacity(forest.trees.len());
    for (tree, bag) in forest.trees.iter().zip(&bags) {
        let mut in_bag = vec![false; n];
        for &i in bag {
            in_bag[i] = true;
        }
        for i in (0..n).filter(|&i| !in_bag[i]) {
            sum[i] += tree.leaf_value(&x[i]);
            cnt[i] += 1;
        }
        let (mut se, mut m) = (0.0, 0usize);
        for i in (0..n).filter(|&i| cnt[i] > 0) {
            se += (sum[i] / cnt[i] as f64 - y[i]).powi(2);
            m += 1;
        }
        curve.push(if m == 0 { f64::NAN } else { se / m as f64 });
    }
    Ok((forest, curve))
}

/// Midpoint split threshold between two consecutive distinct values, kept
/// strictly below `hi` so `x <= t` separates them.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = 0.5 * (lo + hi);
    if t < hi {
        t
    } else {
        lo
    }
}

fn mean_of(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

struct Builder<'a> {
    x: &'a [[f64; NUM_FEATURES]],
    y: &'a [f64],
    hp: &'a Hyperparams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Best {
    cost: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    /// `idx` is sorted ascending (duplicates from bootstrapping allowed).
    fn grow(&mut self, idx: Vec<usize>, depth: usize) {
        let mean = mean_of(self.y, &idx);
        let at_limit = self.hp.max_depth.is_some_and(|d| depth >= d) || idx.len() < 2 * self.hp.min_samples_leaf;
        let split = if at_limit { None } else { self.best_split(&idx, mean) };
        let Some(best) = split else {
            self.nodes.push(Node::Leaf { value: mean });
            return;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Split { feature: best.feature, threshold: best.threshold, right: 0 });
        self.grow(left, depth + 1);
        let right_at = self.nodes.len();
        if let Node::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.grow(right, depth + 1);
    }

    fn best_split(&mut self, idx: &[usize], mean: f64) -> Option<Best> {
        let mut features = index::sample(&mut self.rng, NUM_FEATURES, self.hp.features_per_node).into_vec();
        features.sort_unstable();

        let parent: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let tol = TIE_TOLERANCE * (1.0 + parent);
        let min_leaf = self.hp.min_samples_leaf;
        let n = idx.len();
        let mut best: Option<Best> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.copy_from_slice(idx);
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            // Centered prefix sums keep the child costs well conditioned.
            let (mut s, mut sq) = (0.0, 0.0);
            let total_s: f64 = idx.iter().map(|&i| self.y[i] - mean).sum();
            for k in 0..n - 1 {
                let d = self.y[order[k]] - mean;
                s += d;
                sq += d * d;
                let (lo, hi) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                let nl = k + 1;
                if lo == hi || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let nr = (n - nl) as f64;
                let rs = total_s - s;
                let rsq = parent - sq;
                let cost = (sq - s * s / nl as f64) + (rsq - rs * rs / nr);
                if best.as_ref().is_none_or(|b| cost < b.cost - tol) {
                    best = Some(Best { cost, feature: f, threshold: midpoint(lo, hi) });
                }
            }
        }
        best.filter(|b| parent - b.cost > tol)
    }
}
