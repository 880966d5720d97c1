//! Per-phenotype causal structure learning.
//!
//! [`fit_notears`] learns a weighted adjacency under the smooth acyclicity
//! constraint `h(W) = tr(e^{W∘W}) - f = 0`; the result is thresholded and
//! repaired into a DAG, which [`strongest_path`] and the probabilistic
//! layer consume.

pub mod expm;
mod notears;
pub mod owlqn;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use notears::{fit_notears, notears_objective, NotearsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub cluster_id: usize,
    /// Thresholded, acyclic weights; `w[(i, ii)]` is the effect of `i` on `ii`.
    pub w: DMatrix<f64>,
    /// Optimizer output before thresholding.
    pub raw_w: DMatrix<f64>,
    /// Nonzero entries of `w`, row-major.
    pub edges: Vec<CausalEdge>,
    /// `h(raw_w)` at termination.
    pub h_final: f64,
    pub converged: bool,
}

impl CausalGraph {
    pub fn from_weights(
        cluster_id: usize,
        w: DMatrix<f64>,
        raw_w: DMatrix<f64>,
        h_final: f64,
        converged: bool,
    ) -> Self {
        let f = w.nrows();
        let mut edges = Vec::new();
        for i in 0..f {
            for ii in 0..f {
                if w[(i, ii)] != 0.0 {
                    edges.push(CausalEdge { from: i, to: ii, weight: w[(i, ii)] });
                }
            }
        }
        Self { cluster_id, w, raw_w, edges, h_final, converged }
    }

    pub fn n_features(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.w[(from, to)]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.w[(from, to)] != 0.0
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.n_features()).filter(|&p| self.has_edge(p, node)).collect()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.w.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// An empty graph over `f` features.
    pub fn empty(cluster_id: usize, f: usize) -> Self {
        Self::from_weights(cluster_id, DMatrix::zeros(f, f), DMatrix::zeros(f, f), 0.0, true)
    }
}

/// `h(W) = tr(e^{W∘W}) - f` and its gradient `(e^{W∘W})ᵀ ∘ 2W`.
pub fn acyclicity(w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch { expected: w.nrows(), got: w.ncols() });
    }
    let f = w.nrows();
    let sq = w.component_mul(w);
    let e = expm::expm(&sq).ok_or(Error::NonFinite("matrix exponential"))?;
    let value = e.trace() - f as f64;
    let grad = e.transpose().component_mul(w) * 2.0;
    if !value.is_finite() {
        return Err(Error::NonFinite("acyclicity value"));
    }
    Ok((value, grad))
}

/// Kahn's algorithm over the nonzero pattern; `None` when cyclic.
pub fn topological_order(w: &DMatrix<f64>) -> Option<Vec<usize>> {
    let f = w.nrows();
    let mut indegree: Vec<usize> =
        (0..f).map(|j| (0..f).filter(|&i| w[(i, j)] != 0.0).count()).collect();
    let mut ready: Vec<usize> = (0..f).filter(|&j| indegree[j] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(f);
    while let Some(node) = ready.pop() {
        order.push(node);
        for child in (0..f).rev() {
            if w[(node, child)] != 0.0 {
                indegree[child] -= 1;
                if indegree[child] == 0 {
                    ready.push(child);
                }
            }
        }
    }
    (order.len() == f).then_some(order)
}

fn find_cycle(w: &DMatrix<f64>) -> Option<Vec<usize>> {
    let f = w.nrows();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; f];
    let mut stack_path = Vec::new();

    fn visit(
        node: usize,
        w: &DMatrix<f64>,
        state: &mut [u8],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[node] = 1;
        path.push(node);
        for next in 0..w.nrows() {
            if w[(node, next)] == 0.0 {
                continue;
            }
            if state[next] == 1 {
                let start = path.iter().position(|&p| p == next).unwrap();
                return Some(path[start..].to_vec());
            }
            if state[next] == 0 {
                if let Some(c) = visit(next, w, state, path) {
                    return Some(c);
                }
            }
        }
        path.pop();
        state[node] = 2;
        None
    }

    for start in 0..f {
        if state[start] == 0 {
            if let Some(c) = visit(start, w, &mut state, &mut stack_path) {
                return Some(c);
            }
        }
    }
    None
}

/// Zeroes `|w| < w_min` and the diagonal, then removes the weakest edge of
/// each remaining cycle until the pattern is acyclic.
pub fn threshold_to_dag(raw: &DMatrix<f64>, w_min: f64) -> DMatrix<f64> {
    let f = raw.nrows();
    let mut w = raw.map(|v| if v.abs() < w_min { 0.0 } else { v });
    for i in 0..f {
        w[(i, i)] = 0.0;
    }
    while let Some(cycle) = find_cycle(&w) {
        let (a, b) = (0..cycle.len())
            .map(|k| (cycle[k], cycle[(k + 1) % cycle.len()]))
            .min_by(|&(a, b), &(c, d)| w[(a, b)].abs().total_cmp(&w[(c, d)].abs()))
            .unwrap();
        w[(a, b)] = 0.0;
    }
    w
}

/// Strongest directed path from `from` to `to`: the maximum over paths of
/// the product of `|w|` along it. Returns the node sequence and strength,
/// or an empty path and 0 when unreachable.
pub fn strongest_path(g: &CausalGraph, from: usize, to: usize) -> (Vec<usize>, f64) {
    if from == to {
        return (Vec::new(), 0.0);
    }
    let Some(order) = topological_order(&g.w) else {
        return (Vec::new(), 0.0);
    };
    let f = g.n_features();
    let mut best = vec![f64::NEG_INFINITY; f];
    let mut prev = vec![usize::MAX; f];
    best[from] = 0.0;
    for &node in &order {
        if best[node] == f64::NEG_INFINITY {
            continue;
        }
        for next in 0..f {
            let w = g.w[(node, next)];
            if w == 0.0 {
                continue;
            }
            let cand = best[node] + w.abs().ln();
            if cand > best[next] {
                best[next] = cand;
                prev[next] = node;
            }
        }
    }
    if best[to] == f64::NEG_INFINITY {
        return (Vec::new(), 0.0);
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    (path, best[to].exp())
}
