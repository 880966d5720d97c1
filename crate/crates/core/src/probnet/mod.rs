//! Discrete Bayesian networks on the learned causal DAG.
//!
//! Features are binned, conditional probability tables are Laplace-smoothed
//! counts, and queries run exact variable elimination with a min-fill
//! ordering.

mod factor;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::causal::CausalGraph;
use crate::linalg::quantile_sorted;
use crate::{Error, Result};

pub use factor::Factor;

pub const DEFAULT_BINS: usize = 3;
pub const DEFAULT_PARENT_CAP: usize = 4;
pub const LAPLACE_ALPHA: f64 = 1.0;
/// Categorical columns with more distinct codes than this are binned by
/// quantiles instead of by code.
pub const MAX_CODE_BINS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinRule {
    /// Interior cut points; bin = number of cuts strictly below the value.
    Quantile { cuts: Vec<f64> },
    /// One bin per distinct (encoded) code; values map to the nearest code.
    Codes { codes: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub name: String,
    pub rule: BinRule,
    pub labels: Vec<String>,
}

impl FeatureBins {
    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }

    pub fn bin(&self, v: f64) -> usize {
        match &self.rule {
            BinRule::Quantile { cuts } => cuts.iter().filter(|&&c| v > c).count(),
            BinRule::Codes { codes } => codes
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub features: Vec<FeatureBins>,
}

impl Discretization {
    /// Quantile bins for numeric columns, code bins for categoricals.
    pub fn fit(x: &DMatrix<f64>, names: &[String], categorical: &[bool], n_bins: usize) -> Self {
        let features = (0..x.ncols())
            .map(|j| {
                let mut col: Vec<f64> = x.column(j).iter().copied().collect();
                col.sort_by(f64::total_cmp);
                let mut distinct = col.clone();
                distinct.dedup();
                if categorical.get(j).copied().unwrap_or(false) && distinct.len() <= MAX_CODE_BINS {
                    let labels = (0..distinct.len()).map(|i| format!("code{i}")).collect();
                    return FeatureBins { name: names[j].clone(), rule: BinRule::Codes { codes: distinct }, labels };
                }
                let mut cuts: Vec<f64> = (1..n_bins)
                    .map(|q| quantile_sorted(&col, q as f64 / n_bins as f64))
                    .collect();
                cuts.dedup();
                // A cut at the maximum would leave its bin empty.
                cuts.retain(|&c| c < *col.last().unwrap());
                let labels = match cuts.len() + 1 {
                    3 => vec!["low".into(), "mid".into(), "high".into()],
                    2 => vec!["low".into(), "high".into()],
                    k => (0..k).map(|i| format!("bin{i}")).collect(),
                };
                FeatureBins { name: names[j].clone(), rule: BinRule::Quantile { cuts }, labels }
            })
            .collect();
        Self { features }
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.features.iter().map(FeatureBins::cardinality).collect()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<usize> {
        self.features.iter().zip(row).map(|(b, &v)| b.bin(v)).collect()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Vec<Vec<usize>> {
        (0..x.nrows())
            .map(|i| self.apply_row(&x.row(i).iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}

/// `P(X_i | Pa(X_i))`, one distribution per parent configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub node: usize,
    /// Parent ids in table order (first parent is most significant).
    pub parents: Vec<usize>,
    /// `probs[config * card + value]`.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNet {
    pub cluster_id: usize,
    pub names: Vec<String>,
    pub card: Vec<usize>,
    pub cpts: Vec<Cpt>,
}

impl BayesNet {
    pub fn n_nodes(&self) -> usize {
        self.card.len()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.cpts[node].parents
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&c| self.cpts[c].parents.contains(&node)).collect()
    }

    fn config_index(&self, node: usize, assignment: &[usize]) -> usize {
        self.cpts[node].parents.iter().fold(0, |acc, &p| acc * self.card[p] + assignment[p])
    }

    /// `P(X_node = assignment[node] | parents as in assignment)`.
    pub fn conditional(&self, node: usize, assignment: &[usize]) -> f64 {
        let cfg = self.config_index(node, assignment);
        self.cpts[node].probs[cfg * self.card[node] + assignment[node]]
    }

    /// Full-joint probability of a complete assignment (the factorization).
    pub fn joint(&self, assignment: &[usize]) -> f64 {
        (0..self.n_nodes()).map(|i| self.conditional(i, assignment)).product()
    }

    fn factor(&self, node: usize) -> Factor {
        let cpt = &self.cpts[node];
        let mut scope: Vec<usize> = cpt.parents.clone();
        scope.push(node);
        let mut vars = scope.clone();
        vars.sort_unstable();
        let card: Vec<usize> = vars.iter().map(|&v| self.card[v]).collect();
        let size: usize = card.iter().product();
        let mut assignment = vec![0; self.n_nodes()];
        let mut values = Vec::with_capacity(size);
        for idx in 0..size {
            let mut rem = idx;
            for k in (0..vars.len()).rev() {
                assignment[vars[k]] = rem % card[k];
                rem /= card[k];
            }
            values.push(self.conditional(node, &assignment));
        }
        Factor::new(vars, card, values)
    }
}

/// Builds CPTs from binned rows. Parent sets come from `parents` and are
/// used as given.
pub fn fit_bn_discrete(
    cluster_id: usize,
    names: Vec<String>,
    rows: &[Vec<usize>],
    card: Vec<usize>,
    parents: Vec<Vec<usize>>,
    alpha: f64,
) -> BayesNet {
    let mut net = BayesNet { cluster_id, names, card: card.clone(), cpts: Vec::new() };
    for (node, pa) in parents.into_iter().enumerate() {
        let configs: usize = pa.iter().map(|&p| card[p]).product();
        let mut counts = vec![0.0; configs * card[node]];
        for row in rows {
            let cfg = pa.iter().fold(0, |acc, &p| acc * card[p] + row[p]);
            counts[cfg * card[node] + row[node]] += 1.0;
        }
        let mut probs = vec![0.0; counts.len()];
        for cfg in 0..configs {
            let slice = &counts[cfg * card[node]..(cfg + 1) * card[node]];
            let total: f64 = slice.iter().sum::<f64>() + alpha * card[node] as f64;
            for v in 0..card[node] {
                probs[cfg * card[node] + v] = (slice[v] + alpha) / total;
            }
        }
        net.cpts.push(Cpt { node, parents: pa, probs });
    }
    net
}

/// Parent sets from the DAG, keeping at most `cap` parents by `|w|`.
pub fn capped_parents(dag: &CausalGraph, cap: usize) -> Vec<Vec<usize>> {
    (0..dag.n_features())
        .map(|node| {
            let mut pa = dag.parents(node);
            pa.sort_by(|&a, &b| {
                dag.weight(b, node).abs().total_cmp(&dag.weight(a, node).abs()).then(a.cmp(&b))
            });
            pa.truncate(cap);
            pa.sort_unstable();
            pa
        })
        .collect()
}

pub fn fit_bn(x: &DMatrix<f64>, dag: &CausalGraph, disc: &Discretization) -> Result<BayesNet> {
    if x.ncols() != dag.n_features() || disc.features.len() != dag.n_features() {
        return Err(Error::DimensionMismatch { expected: dag.n_features(), got: x.ncols() });
    }
    if crate::causal::topological_order(&dag.w).is_none() {
        return Err(Error::InvalidSchema("Bayesian network structure must be acyclic".into()));
    }
    let rows = disc.apply(x);
    let names = disc.features.iter().map(|b| b.name.clone()).collect();
    Ok(fit_bn_discrete(
        dag.cluster_id,
        names,
        &rows,
        disc.cardinalities(),
        capped_parents(dag, DEFAULT_PARENT_CAP),
        LAPLACE_ALPHA,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub target: usize,
    pub evidence: BTreeMap<usize, usize>,
}

impl Query {
    pub fn marginal(target: usize) -> Self {
        Self { target, evidence: BTreeMap::new() }
    }

    pub fn given(target: usize, evidence: &[(usize, usize)]) -> Self {
        Self { target, evidence: evidence.iter().copied().collect() }
    }
}

/// Greedy min-fill elimination order over `vars` given factor scopes.
fn min_fill_order(scopes: &[Vec<usize>], vars: &BTreeSet<usize>) -> Vec<usize> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for scope in scopes {
        for &a in scope {
            let entry = adj.entry(a).or_default();
            for &b in scope {
                if a != b {
                    entry.insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = vars.clone();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let next = *remaining
            .iter()
            .min_by_key(|&&v| {
                let nb: Vec<usize> = adj.get(&v).map(|s| s.iter().copied().collect()).unwrap_or_default();
                let mut fill = 0;
                for i in 0..nb.len() {
                    for j in (i + 1)..nb.len() {
                        if !adj.get(&nb[i]).is_some_and(|s| s.contains(&nb[j])) {
                            fill += 1;
                        }
                    }
                }
                (fill, v)
            })
            .unwrap();
        let nb: Vec<usize> = adj.remove(&next).map(|s| s.into_iter().collect()).unwrap_or_default();
        for &a in &nb {
            if let Some(s) = adj.get_mut(&a) {
                s.remove(&next);
                for &b in &nb {
                    if a != b {
                        s.insert(b);
                    }
                }
            }
        }
        remaining.remove(&next);
        order.push(next);
    }
    order
}

/// Exact `P(target | evidence)` by variable elimination.
pub fn posterior(bn: &BayesNet, q: &Query) -> Result<Vec<f64>> {
    let n = bn.n_nodes();
    if q.target >= n {
        return Err(Error::DimensionMismatch { expected: n, got: q.target });
    }
    if q.evidence.contains_key(&q.target) {
        return Err(Error::TargetInEvidence(q.target));
    }
    let mut factors: Vec<Factor> = (0..n)
        .map(|node| {
            q.evidence.iter().fold(bn.factor(node), |f, (&var, &val)| f.reduce(var, val))
        })
        .collect();
    let hidden: BTreeSet<usize> =
        (0..n).filter(|v| *v != q.target && !q.evidence.contains_key(v)).collect();
    let scopes: Vec<Vec<usize>> = factors.iter().map(|f| f.vars.clone()).collect();
    for var in min_fill_order(&scopes, &hidden) {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.contains(var));
        factors = rest;
        if let Some(prod) = touching.into_iter().reduce(|a, b| a.product(&b)) {
            factors.push(prod.sum_out(var));
        }
    }
    let result = factors.into_iter().fold(Factor::scalar(1.0), |a, b| a.product(&b));
    debug_assert_eq!(result.vars, vec![q.target]);
    let total: f64 = result.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InconsistentEvidence);
    }
    Ok(result.values.iter().map(|v| v / total).collect())
}

/// Parents, children and the children's other parents.
pub fn markov_blanket(bn: &BayesNet, x: usize) -> BTreeSet<usize> {
    let mut mb: BTreeSet<usize> = bn.parents(x).iter().copied().collect();
    for child in bn.children(x) {
        mb.insert(child);
        mb.extend(bn.parents(child).iter().copied().filter(|&p| p != x));
    }
    mb
}

/// `KL(p ‖ q)` in nats; terms with `p = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `I(X_i; X_ii)` in nats, as `Σ_x P(X_i = x) KL(P(X_ii | x) ‖ P(X_ii))`.
pub fn mutual_information(bn: &BayesNet, i: usize, ii: usize) -> Result<f64> {
    let p_i = posterior(bn, &Query::marginal(i))?;
    let p_ii = posterior(bn, &Query::marginal(ii))?;
    let mut mi = 0.0;
    for (x, &px) in p_i.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let cond = posterior(bn, &Query::given(ii, &[(i, x)]))?;
        mi += px * kl_divergence(&cond, &p_ii);
    }
    Ok(mi.max(0.0))
}

/// Probabilistic influence of `i` on `ii`: mutual information normalized by
/// `ln card(ii)`, in [0, 1].
pub fn influence(bn: &BayesNet, i: usize, ii: usize) -> Result<f64> {
    if i == ii {
        return Ok(0.0);
    }
    let denom = (bn.card[ii] as f64).ln();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mutual_information(bn, i, ii)? / denom).clamp(0.0, 1.0))
}

/// Single-value diagnostic: `KL(P(X_ii | X_i = value) ‖ P(X_ii))`.
pub fn influence_at(bn: &BayesNet, i: usize, value: usize, ii: usize) -> Result<f64> {
    let marginal = posterior(bn, &Query::marginal(ii))?;
    let cond = posterior(bn, &Query::given(ii, &[(i, value)]))?;
    Ok(kl_divergence(&cond, &marginal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn laplace_root_counts() {
        let mut rows = Vec::new();
        rows.extend(std::iter::repeat_n(vec![0], 50));
        rows.extend(std::iter::repeat_n(vec![1], 30));
        rows.extend(std::iter::repeat_n(vec![2], 20));
        let bn = fit_bn_discrete(0, names(1), &rows, vec![3], vec![vec![]], 1.0);
        let p = &bn.cpts[0].probs;
        assert!((p[0] - 51.0 / 103.0).abs() < 1e-15);
        assert!((p[1] - 31.0 / 103.0).abs() < 1e-15);
        assert!((p[2] - 21.0 / 103.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_parent_config_is_uniform() {
        let rows = vec![vec![0, 0]; 10];
        let bn = fit_bn_discrete(0, names(2), &rows, vec![3, 3], vec![vec![], vec![0]], 1.0);
        let probs = &bn.cpts[1].probs;
        for v in 0..3 {
            assert!((probs[2 * 3 + v] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn blanket_definitions() {
        let rows = vec![vec![0, 0, 0, 0]];
        // chain 0 -> 1 -> 2, node 3 isolated
        let chain = fit_bn_discrete(0, names(4), &rows, vec![2; 4], vec![vec![], vec![0], vec![1], vec![]], 1.0);
        assert!(markov_blanket(&chain, 3).is_empty());
        assert_eq!(markov_blanket(&chain, 1), [0, 2].into_iter().collect());
        // v-structure 0 -> 2 <- 1
        let v = fit_bn_discrete(0, names(3), &rows, vec![2; 3], vec![vec![], vec![], vec![0, 1]], 1.0);
        assert_eq!(markov_blanket(&v, 0), [1, 2].into_iter().collect());
    }

    #[test]
    fn kl_of_identical_is_zero() {
        assert_eq!(kl_divergence(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]), 0.0);
    }

    #[test]
    fn quantile_bins_partition_training_values() {
        let x = DMatrix::from_fn(30, 2, |i, j| if j == 0 { i as f64 } else { (i % 3) as f64 });
        let d = Discretization::fit(&x, &names(2), &[false, true], 3);
        assert_eq!(d.cardinalities(), vec![3, 3]);
        let rows = d.apply(&x);
        let mut counts = [0; 3];
        rows.iter().for_each(|r| counts[r[0]] += 1);
        assert_eq!(counts, [10, 10, 10]);
        assert_eq!(rows[4][1], 1);
    }

    #[test]
    fn target_in_evidence_is_rejected() {
        let rows = vec![vec![0, 1]];
        let bn = fit_bn_discrete(0, names(2), &rows, vec![2, 2], vec![vec![], vec![0]], 1.0);
        assert!(matches!(
            posterior(&bn, &Query::given(1, &[(1, 0)])),
            Err(Error::TargetInEvidence(1))
        ));
    }
}
