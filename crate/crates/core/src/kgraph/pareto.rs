use serde::{Deserialize, Serialize};

use crate::evidence::ScoredClaim;

/// `a` dominates `b`: no worse on every objective and better on one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of non-dominated points, ascending. Identical vectors do not
/// dominate each other, so duplicates on the front are all kept.
pub fn front_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| !points.iter().any(|a| dominates(a.as_ref(), points[j].as_ref())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub candidates: Vec<ScoredClaim>,
    /// Indices into `candidates`.
    pub front: Vec<usize>,
    /// How many candidates dominate each candidate.
    pub dominated_by: Vec<usize>,
}

impl ParetoFront {
    pub fn members(&self) -> impl Iterator<Item = &ScoredClaim> {
        self.front.iter().map(|&i| &self.candidates[i])
    }
}

pub fn pareto_front(claims: Vec<ScoredClaim>) -> ParetoFront {
    let points: Vec<[f64; 3]> = claims.iter().map(ScoredClaim::objectives).collect();
    let dominated_by: Vec<usize> =
        points.iter().map(|p| points.iter().filter(|a| dominates(*a, p)).count()).collect();
    let front = (0..points.len()).filter(|&i| dominated_by[i] == 0).collect();
    ParetoFront { candidates: claims, front, dominated_by }
}
