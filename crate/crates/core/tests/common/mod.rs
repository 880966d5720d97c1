//! Independent oracles and generators shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use phenokg::probnet::BayesNet;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random linear SEM: `n_edges` edges consistent with a random causal
/// order, weights uniform on ±[0.5, 2], unit Gaussian noise.
pub fn linear_sem(f: usize, n_edges: usize, n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let mut order: Vec<usize> = (0..f).collect();
    order.shuffle(&mut r);
    let mut pairs = Vec::new();
    for a in 0..f {
        for b in (a + 1)..f {
            pairs.push((order[a], order[b]));
        }
    }
    pairs.shuffle(&mut r);
    let mut w = DMatrix::zeros(f, f);
    for &(i, j) in pairs.iter().take(n_edges) {
        let mag = r.random_range(0.5..2.0);
        w[(i, j)] = if r.random::<bool>() { mag } else { -mag };
    }
    let noise: DMatrix<f64> = DMatrix::from_fn(n, f, |_, _| StandardNormal.sample(&mut r));
    // X = N (I - W)^{-1}
    let inv = (DMatrix::<f64>::identity(f, f) - &w).try_inverse().unwrap();
    (noise * inv, w)
}

/// Structural Hamming distance: extra + missing + reversed edges, a
/// reversal counting once.
pub fn shd(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> usize {
    let f = truth.nrows();
    let mut d = 0;
    for i in 0..f {
        for j in (i + 1)..f {
            let t = (truth[(i, j)] != 0.0, truth[(j, i)] != 0.0);
            let e = (est[(i, j)] != 0.0, est[(j, i)] != 0.0);
            if t != e {
                d += 1;
            }
        }
    }
    d
}

/// Every complete assignment of the network, in lexicographic order.
pub fn all_assignments(card: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = card.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut a = vec![0; card.len()];
            for k in (0..card.len()).rev() {
                a[k] = idx % card[k];
                idx /= card[k];
            }
            a
        })
        .collect()
}

/// `P(target | evidence)` by summing the full joint.
pub fn brute_posterior(bn: &BayesNet, target: usize, evidence: &[(usize, usize)]) -> Vec<f64> {
    let mut out = vec![0.0; bn.card[target]];
    for a in all_assignments(&bn.card) {
        if evidence.iter().all(|&(v, x)| a[v] == x) {
            out[a[target]] += bn.joint(&a);
        }
    }
    let total: f64 = out.iter().sum();
    out.iter().map(|v| v / total).collect()
}

/// Non-dominated set by the definition: nothing is at least as good on all
/// objectives and strictly better on one.
pub fn brute_front(points: &[[f64; 3]]) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| {
            !(0..points.len()).any(|a| {
                let ge = (0..3).all(|s| points[a][s] >= points[j][s]);
                let gt = (0..3).any(|s| points[a][s] > points[j][s]);
                ge && gt
            })
        })
        .collect()
}

/// Random discrete network: nodes in index order, each with up to three
/// earlier parents, cardinalities in 2..=max_card, CPT rows drawn from a
/// flat Dirichlet via normalized exponentials.
pub fn random_bn(n_nodes: usize, max_card: usize, seed: u64) -> BayesNet {
    use phenokg::probnet::Cpt;
    let mut r = rng(seed);
    let card: Vec<usize> = (0..n_nodes).map(|_| r.random_range(2..=max_card)).collect();
    let mut cpts = Vec::new();
    for node in 0..n_nodes {
        let mut candidates: Vec<usize> = (0..node).collect();
        candidates.shuffle(&mut r);
        let n_pa = r.random_range(0..=candidates.len().min(3));
        let mut parents: Vec<usize> = candidates[..n_pa].to_vec();
        parents.sort();
        let configs: usize = parents.iter().map(|&p| card[p]).product();
        let mut probs = Vec::with_capacity(configs * card[node]);
        for _ in 0..configs {
            let raw: Vec<f64> = (0..card[node]).map(|_| -r.random::<f64>().max(1e-12).ln()).collect();
            let total: f64 = raw.iter().sum();
            probs.extend(raw.iter().map(|v| v / total));
        }
        cpts.push(Cpt { node, parents, probs });
    }
    BayesNet {
        cluster_id: 0,
        names: (0..n_nodes).map(|i| format!("x{i}")).collect(),
        card,
        cpts,
    }
}

/// Ancestral sampling; nodes of `random_bn` are already topologically
/// ordered.
pub fn sample_bn(bn: &BayesNet, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mut row = vec![0; bn.card.len()];
            for cpt in &bn.cpts {
                let cfg = cpt.parents.iter().fold(0, |acc, &p| acc * bn.card[p] + row[p]);
                let k = bn.card[cpt.node];
                let dist = &cpt.probs[cfg * k..(cfg + 1) * k];
                let u: f64 = r.random();
                let mut acc = 0.0;
                row[cpt.node] = k - 1;
                for (v, p) in dist.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        row[cpt.node] = v;
                        break;
                    }
                }
            }
            row
        })
        .collect()
}

/// `I(X; Y | Z)` in nats for disjoint variable sets, by full enumeration of
/// the network's joint.
pub fn brute_cmi(bn: &BayesNet, x: &[usize], y: &[usize], z: &[usize]) -> f64 {
    use std::collections::HashMap;
    let mut pxyz: HashMap<(Vec<usize>, Vec<usize>, Vec<usize>), f64> = HashMap::new();
    for a in all_assignments(&bn.card) {
        let key = (
            x.iter().map(|&v| a[v]).collect(),
            y.iter().map(|&v| a[v]).collect(),
            z.iter().map(|&v| a[v]).collect(),
        );
        *pxyz.entry(key).or_default() += bn.joint(&a);
    }
    let mut pxz: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    let mut pyz: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    let mut pz: HashMap<Vec<usize>, f64> = HashMap::new();
    for ((xv, yv, zv), p) in &pxyz {
        *pxz.entry((xv.clone(), zv.clone())).or_default() += p;
        *pyz.entry((yv.clone(), zv.clone())).or_default() += p;
        *pz.entry(zv.clone()).or_default() += p;
    }
    pxyz.iter()
        .filter(|(_, p)| **p > 0.0)
        .map(|((xv, yv, zv), p)| {
            let num = p * pz[zv];
            let den = pxz[&(xv.clone(), zv.clone())] * pyz[&(yv.clone(), zv.clone())];
            p * (num / den).ln()
        })
        .sum()
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The bundled fixture-mode config, writing into `out`.
pub fn golden_config(out: &std::path::Path) -> phenokg::pipeline::PipelineConfig {
    let mut cfg = phenokg::pipeline::PipelineConfig::load(&data_dir().join("golden.toml")).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::HashMap;
    let c2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| c2(n)).sum();
    let sa: f64 = rows.values().map(|&n| c2(n)).sum();
    let sb: f64 = cols.values().map(|&n| c2(n)).sum();
    let expected = sa * sb / c2(a.len());
    let max = 0.5 * (sa + sb);
    if max == expected { 1.0 } else { (index - expected) / (max - expected) }
}

/// `n` points from `k` isotropic unit-variance Gaussians in `dim`
/// dimensions whose means sit `sep` apart along distinct axes.
pub fn planted_gmm(n: usize, k: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let points = labels
        .iter()
        .map(|&c| {
            (0..dim)
                .map(|d| {
                    let noise: f64 = StandardNormal.sample(&mut r);
                    noise + if d == c { sep / std::f64::consts::SQRT_2 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    (points, labels)
}

/// A cluster model with the given centroids and no training members.
pub fn model_from_centroids(centroids: Vec<Vec<f64>>, soft_temperature: f64) -> phenokg::phenotype::ClusterModel {
    phenokg::phenotype::ClusterModel {
        k: centroids.len(),
        centroids,
        members: Vec::new(),
        labels: Vec::new(),
        soft_temperature,
        silhouette: 0.0,
        eigenvalues: Vec::new(),
        degenerate: false,
    }
}

/// Cluster `k` maps entirely onto standard phenotype `k`.
pub fn one_hot_mixtures(k: usize) -> Vec<phenokg::phenotype::SpMixture> {
    (0..k)
        .map(|c| phenokg::phenotype::SpMixture {
            cluster_id: c,
            omega: (0..k).map(|m| if m == c { 1.0 } else { 0.0 }).collect(),
            similarities: (0..k).map(|m| if m == c { 1.0 } else { -1.0 }).collect(),
            temperature: 0.5,
        })
        .collect()
}

pub fn online_state(
    id: usize,
    z: Vec<f64>,
    model: &phenokg::phenotype::ClusterModel,
    mixtures: &[phenokg::phenotype::SpMixture],
) -> phenokg::online::OnlineState {
    let pi = phenokg::phenotype::soft_assign(id, &z, model).pi;
    let pi_sp = phenokg::online::sp_projection(&pi, mixtures);
    phenokg::online::OnlineState { state_id: id, values: z.clone(), z, pi, pi_sp }
}

/// Six phenotypes whose centroids all lie close to `+e₁` in three
/// dimensions, with training points scattered around them. A state far
/// out along `-e₁` is anti-aligned with every centroid and equidistant
/// from all of them, so both parts of its match score are minimal.
pub struct Antipodal {
    pub model: phenokg::phenotype::ClusterModel,
    pub mixtures: Vec<phenokg::phenotype::SpMixture>,
    pub training: Vec<Vec<f64>>,
}

impl Antipodal {
    pub fn new(seed: u64) -> Self {
        let centroids: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                vec![1.0, 0.1 * a.cos(), 0.1 * a.sin()]
            })
            .collect();
        let mut r = rng(seed);
        let training = (0..300)
            .map(|i| {
                centroids[i % 6]
                    .iter()
                    .map(|c| {
                        let e: f64 = StandardNormal.sample(&mut r);
                        c + 0.02 * e
                    })
                    .collect()
            })
            .collect();
        Self { model: model_from_centroids(centroids, 0.02), mixtures: one_hot_mixtures(6), training }
    }

    /// `i`-th outlier: `-10 e₁` plus a tiny deterministic wobble.
    pub fn outlier(&self, i: usize) -> phenokg::online::OnlineState {
        let w = 1e-4 * (i as f64 + 1.0);
        online_state(1000 + i, vec![-10.0, w, -w], &self.model, &self.mixtures)
    }
}
