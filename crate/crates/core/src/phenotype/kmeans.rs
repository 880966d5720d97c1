//! Seeded k-means++ with Lloyd iterations.

use rand::Rng;

use crate::linalg::sq_dist;
use crate::rng::StageRng;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut StageRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

pub fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

/// Lloyd iterations from given centroids. Empty clusters are reseeded with
/// the point farthest from its current centroid.
pub fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let k = centroids.len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (l, _) = nearest(p, &centroids);
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        for empty in empties {
            let far = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &centroids[labels[a]])
                        .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                });
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = empty;
                counts[empty] += 1;
                changed = true;
            }
        }
        let fresh = means(points, &labels, k);
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = fresh[c].clone();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    KMeansResult { labels, centroids, inertia }
}

pub fn kmeans(points: &[Vec<f64>], k: usize, n_init: usize, rng: &mut StageRng) -> KMeansResult {
    let mut best: Option<KMeansResult> = None;
    for _ in 0..n_init.max(1) {
        let run = lloyd(points, plus_plus_init(points, k, rng), 300);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one k-means run")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn separates_two_obvious_groups() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(vec![i as f64 * 0.01, 0.0]);
            pts.push(vec![10.0 + i as f64 * 0.01, 5.0]);
        }
        let r = kmeans(&pts, 2, 3, &mut seeded(1));
        for i in (0..20).step_by(2) {
            assert_eq!(r.labels[i], r.labels[0]);
            assert_eq!(r.labels[i + 1], r.labels[1]);
        }
        assert_ne!(r.labels[0], r.labels[1]);
    }

    #[test]
    fn no_empty_clusters_with_duplicates() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let r = kmeans(&pts, 3, 2, &mut seeded(3));
        for c in 0..3 {
            assert!(r.labels.iter().any(|&l| l == c));
        }
    }
}
