//! Spectral clustering on a self-tuned k-nearest-neighbor affinity graph.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use super::kmeans;
use crate::linalg::sq_dist;
use crate::rng::StageRng;

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Smallest eigenvalues of the normalized Laplacian, ascending.
    pub eigenvalues: Vec<f64>,
    pub degenerate: bool,
}

/// Symmetric kNN affinity with local scaling `exp(-d² / (σ_i σ_j))`, where
/// `σ_i` is the distance from `i` to its `min(k, 7)`-th neighbor.
pub fn knn_affinity(points: &[Vec<f64>], knn: usize) -> DMatrix<f64> {
    let n = points.len();
    let knn = knn.min(n.saturating_sub(1)).max(1);
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(&points[i], &points[j]);
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }
    let mut neighbors = Vec::with_capacity(n);
    let mut sigma = vec![0.0; n];
    let scale_rank = knn.min(7);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        order.truncate(knn);
        sigma[i] = d2[(i, order[scale_rank - 1])].sqrt();
        neighbors.push(order);
    }
    let positive: Vec<f64> = sigma.iter().copied().filter(|s| *s > 0.0).collect();
    let floor = if positive.is_empty() {
        1.0
    } else {
        positive.iter().copied().fold(f64::INFINITY, f64::min) * 1e-3
    };
    for s in sigma.iter_mut() {
        if *s <= 0.0 {
            *s = floor;
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            let a = (-d2[(i, j)] / (sigma[i] * sigma[j])).exp();
            if a > w[(i, j)] {
                w[(i, j)] = a;
                w[(j, i)] = a;
            }
        }
    }
    w
}

/// Eigen-decomposition of `I - D^{-1/2} W D^{-1/2}`, eigenpairs ascending.
pub fn laplacian_spectrum(w: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = w.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = w.row(i).sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `k` in `[k_min, k_max]` maximizing `λ_{k+1} - λ_k` (1-based eigenvalues).
pub fn eigengap_k(eigenvalues: &[f64], k_min: usize, k_max: usize) -> usize {
    let k_max = k_max.min(eigenvalues.len().saturating_sub(1));
    let mut best = (k_min, f64::NEG_INFINITY);
    for k in k_min..=k_max {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best.1 + 1e-12 {
            best = (k, gap);
        }
    }
    best.0
}

pub fn spectral_cluster(
    points: &[Vec<f64>],
    knn: usize,
    k_range: (usize, usize),
    k_override: Option<usize>,
    n_init: usize,
    rng: &mut StageRng,
) -> SpectralResult {
    let n = points.len();
    let identical = points.windows(2).all(|w| w[0] == w[1]);
    if identical {
        let k = k_override.unwrap_or(k_range.0);
        warn!("all {n} states are identical; forcing K = {k}");
        return SpectralResult {
            k,
            labels: (0..n).map(|i| i * k / n).collect(),
            eigenvalues: Vec::new(),
            degenerate: true,
        };
    }
    let w = knn_affinity(points, knn);
    let (values, vectors) = laplacian_spectrum(&w);
    let k = k_override.unwrap_or_else(|| eigengap_k(&values, k_range.0, k_range.1));
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r: Vec<f64> = (0..k).map(|c| vectors[(i, c)]).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 { r.iter().map(|v| v / norm).collect() } else { r }
        })
        .collect();
    let km = kmeans::kmeans(&rows, k, n_init, rng);
    let keep = (k_range.1 + 1).min(values.len());
    SpectralResult { k, labels: km.labels, eigenvalues: values[..keep].to_vec(), degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigengap_picks_largest_jump() {
        let ev = [0.0, 0.001, 0.002, 0.5, 0.6, 0.7];
        assert_eq!(eigengap_k(&ev, 2, 5), 3);
    }

    #[test]
    fn disconnected_components_have_zero_eigenvalues() {
        let mut pts = Vec::new();
        for c in 0..3 {
            for i in 0..8 {
                pts.push(vec![c as f64 * 100.0 + i as f64 * 0.1, (i % 3) as f64 * 0.1]);
            }
        }
        let (values, _) = laplacian_spectrum(&knn_affinity(&pts, 5));
        assert!(values[..3].iter().all(|v| v.abs() < 1e-9));
        assert!(values[3] > 1e-3);
    }
}
