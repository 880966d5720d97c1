//! Isolation forest over embedding vectors.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IForestConfig {
    pub trees: usize,
    /// Upper bound on the per-tree subsample; the actual size is
    /// `min(subsample, n)`.
    pub subsample: usize,
    /// Scores above this are flagged anomalous.
    pub cutoff: f64,
}

impl Default for IForestConfig {
    fn default() -> Self {
        Self { trees: 100, subsample: 256, cutoff: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum INode {
    Leaf { size: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ITree {
    nodes: Vec<INode>,
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points; normalizes isolation depths.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

impl ITree {
    fn grow(data: &[Vec<f64>], idx: Vec<usize>, height_limit: usize, rng: &mut impl Rng) -> Self {
        let mut tree = ITree { nodes: Vec::new() };
        tree.build(data, idx, 0, height_limit, rng);
        tree
    }

    fn build(&mut self, data: &[Vec<f64>], idx: Vec<usize>, depth: usize, limit: usize, rng: &mut impl Rng) -> usize {
        let at = self.nodes.len();
        self.nodes.push(INode::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return at;
        }
        let dim = data[idx[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..dim)
            .filter_map(|j| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(data[i][j]), hi.max(data[i][j]))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return at;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let threshold = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| data[i][feature] < threshold);
        let left = self.build(data, l, depth + 1, limit, rng);
        let right = self.build(data, r, depth + 1, limit, rng);
        self.nodes[at] = INode::Split { feature, threshold, left, right };
        at
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                INode::Leaf { size } => return depth + average_path_length(size),
                INode::Split { feature, threshold, left, right } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<ITree>,
    sample_size: usize,
    pub cutoff: f64,
}

impl IsolationForest {
    pub fn fit(data: &[Vec<f64>], cfg: &IForestConfig, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let psi = cfg.subsample.min(data.len()).max(1);
        let limit = (psi as f64).log2().ceil().max(1.0) as usize;
        let trees = (0..cfg.trees)
            .map(|_| {
                let idx = if data.is_empty() { Vec::new() } else { sample(&mut rng, data.len(), psi).into_vec() };
                ITree::grow(data, idx, limit, &mut rng)
            })
            .collect();
        Self { trees, sample_size: psi, cutoff: cfg.cutoff }
    }

    /// `2^(-E[h(x)] / c(ψ))`: near 1 for easily isolated points, at or
    /// below 0.5 for typical ones.
    pub fn score(&self, x: &[f64]) -> f64 {
        let c = average_path_length(self.sample_size);
        if c == 0.0 || self.trees.is_empty() {
            return 0.5;
        }
        let mean = self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean / c)
    }

    /// `-1` when the score exceeds the cutoff, `+1` otherwise.
    pub fn indicator(&self, x: &[f64]) -> i8 {
        if self.score(x) > self.cutoff { -1 } else { 1 }
    }
}
