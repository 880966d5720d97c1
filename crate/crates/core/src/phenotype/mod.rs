//! Phenotype discovery in embedding space.
//!
//! States are clustered spectrally, the partition is refined with Lloyd
//! steps so that every member is nearest to its own centroid, and each
//! cluster is described as a softmax mixture over user-supplied standard
//! phenotype signatures.

pub mod kmeans;
pub mod metrics;
pub mod spectral;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::causal::CausalGraph;
use crate::embed::GraphEmbedding;
use crate::ingest::EncodedMatrix;
use crate::linalg::{self, sq_dist};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub knn: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub k_override: Option<usize>,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { knn: 15, k_min: 2, k_max: 10, k_override: None, n_init: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Training state ids per cluster.
    pub members: Vec<Vec<usize>>,
    /// Hard label per training state, aligned with the embedding order.
    pub labels: Vec<usize>,
    /// `T_a`: median squared distance between distinct centroids.
    pub soft_temperature: f64,
    pub silhouette: f64,
    /// Leading normalized-Laplacian eigenvalues used for the eigengap.
    pub eigenvalues: Vec<f64>,
    pub degenerate: bool,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Nearest-centroid assignment.
    pub fn hard_assign(&self, z: &[f64]) -> usize {
        kmeans::nearest(z, &self.centroids).0
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) }
}

fn soft_temperature(centroids: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..centroids.len() {
        for j in (i + 1)..centroids.len() {
            d.push(sq_dist(&centroids[i], &centroids[j]));
        }
    }
    let t = median(d);
    if t.is_finite() && t > 0.0 { t } else { 1.0 }
}

pub fn fit_clusters(embeddings: &[GraphEmbedding], cfg: &ClusterConfig) -> Result<ClusterModel> {
    let needed = 2 * cfg.k_override.unwrap_or(cfg.k_min).max(cfg.k_min);
    if embeddings.len() < needed {
        return Err(Error::TooFewStates { needed, got: embeddings.len() });
    }
    let points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.graph_vector.clone()).collect();
    let mut rng = rng::seeded(cfg.seed);
    let spec = spectral::spectral_cluster(
        &points,
        cfg.knn,
        (cfg.k_min, cfg.k_max),
        cfg.k_override,
        cfg.n_init,
        &mut rng,
    );
    let k = spec.k;
    let (labels, centroids) = if spec.degenerate {
        (spec.labels.clone(), kmeans::means(&points, &spec.labels, k))
    } else {
        let refined = kmeans::lloyd(&points, kmeans::means(&points, &spec.labels, k), 100);
        (refined.labels, refined.centroids)
    };
    let mut members = vec![Vec::new(); k];
    for (e, &l) in embeddings.iter().zip(&labels) {
        members[l].push(e.state_id);
    }
    let silhouette = if spec.degenerate { 0.0 } else { metrics::silhouette(&points, &labels) };
    Ok(ClusterModel {
        k,
        soft_temperature: soft_temperature(&centroids),
        centroids,
        members,
        labels,
        silhouette,
        eigenvalues: spec.eigenvalues,
        degenerate: spec.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftAssignment {
    pub state_id: usize,
    pub pi: Vec<f64>,
}

impl SoftAssignment {
    pub fn argmax(&self) -> usize {
        argmax(&self.pi)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// `π_k ∝ exp(-‖z - μ_k‖² / T_a)`.
pub fn soft_assign(state_id: usize, z: &[f64], model: &ClusterModel) -> SoftAssignment {
    let scores: Vec<f64> = model.centroids.iter().map(|c| -sq_dist(z, c)).collect();
    SoftAssignment { state_id, pi: linalg::softmax(&scores, model.soft_temperature) }
}

/// A named pattern with one signed weight per retained feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardPhenotypeDef {
    pub name: String,
    pub signature: Vec<f64>,
}

impl StandardPhenotypeDef {
    /// Resolves a name → weight map against the encoded columns. Unknown
    /// names are ignored; absent columns weigh 0.
    pub fn from_named_weights(
        name: &str,
        weights: &BTreeMap<String, f64>,
        columns: &[String],
    ) -> Result<Self> {
        let signature: Vec<f64> =
            columns.iter().map(|c| weights.get(c).copied().unwrap_or(0.0).clamp(-1.0, 1.0)).collect();
        if signature.iter().all(|w| *w == 0.0) {
            return Err(Error::ZeroSignature(name.to_string()));
        }
        Ok(Self { name: name.to_string(), signature })
    }
}

pub const DEFAULT_SP_TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpMixture {
    pub cluster_id: usize,
    /// `Ω_k[m] = P(sp_m | P_k)`.
    pub omega: Vec<f64>,
    /// Cosine similarities `s_km`.
    pub similarities: Vec<f64>,
    pub temperature: f64,
}

impl SpMixture {
    pub fn from_similarities(cluster_id: usize, similarities: Vec<f64>, temperature: f64) -> Self {
        let omega = linalg::softmax(&similarities, temperature);
        Self { cluster_id, omega, similarities, temperature }
    }

    /// Indices of the standard phenotypes ordered by decreasing weight.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.omega.len()).collect();
        idx.sort_by(|&a, &b| self.omega[b].total_cmp(&self.omega[a]).then(a.cmp(&b)));
        idx
    }
}

/// Mean standardized feature vector of one cluster's members.
pub fn cluster_profile(model: &ClusterModel, m: &EncodedMatrix, cluster: usize) -> Vec<f64> {
    let members = &model.members[cluster];
    let f = m.n_features();
    let mut profile = vec![0.0; f];
    for &s in members {
        for (j, p) in profile.iter_mut().enumerate() {
            *p += m.values[(s, j)];
        }
    }
    if !members.is_empty() {
        profile.iter_mut().for_each(|p| *p /= members.len() as f64);
    }
    profile
}

pub fn map_to_standard(
    model: &ClusterModel,
    m: &EncodedMatrix,
    sps: &[StandardPhenotypeDef],
    temperature: f64,
) -> Result<Vec<SpMixture>> {
    if sps.is_empty() {
        return Err(Error::InvalidSchema("at least one standard phenotype is required".into()));
    }
    for sp in sps {
        if sp.signature.len() != m.n_features() {
            return Err(Error::DimensionMismatch { expected: m.n_features(), got: sp.signature.len() });
        }
        if sp.signature.iter().all(|w| *w == 0.0) {
            return Err(Error::ZeroSignature(sp.name.clone()));
        }
    }
    Ok((0..model.k)
        .map(|k| {
            let profile = cluster_profile(model, m, k);
            let sims = sps
                .iter()
                .map(|sp| linalg::cosine(&profile, &sp.signature).unwrap_or(0.0))
                .collect();
            SpMixture::from_similarities(k, sims, temperature)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantFeature {
    pub index: usize,
    pub name: String,
    /// Cluster mean minus population mean, in population sd units.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// `PS_k`: what downstream hypothesis generation knows about a phenotype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeState {
    pub cluster_id: usize,
    pub dominant_features: Vec<DominantFeature>,
    pub salient_edges: Vec<SalientEdge>,
    /// Top-2 standard phenotype labels.
    pub context: Vec<String>,
    #[serde(default)]
    pub exploratory: bool,
}

pub const DOMINANT_MIN_DEVIATION: f64 = 0.5;
pub const DOMINANT_MAX: usize = 8;
pub const SALIENT_EDGES: usize = 5;

pub fn dominant_features(profile: &[f64], names: &[String]) -> Vec<DominantFeature> {
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| profile[b].abs().total_cmp(&profile[a].abs()).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&j| profile[j].abs() >= DOMINANT_MIN_DEVIATION)
        .take(DOMINANT_MAX)
        .collect();
    if picked.is_empty() {
        picked = order.into_iter().take(3).collect();
    }
    picked
        .into_iter()
        .map(|j| DominantFeature { index: j, name: names[j].clone(), deviation: profile[j] })
        .collect()
}

pub fn salient_edges(causal: &CausalGraph, names: &[String]) -> Vec<SalientEdge> {
    let mut edges = causal.edges.clone();
    edges.sort_by(|a, b| {
        b.weight.abs().total_cmp(&a.weight.abs()).then((a.from, a.to).cmp(&(b.from, b.to)))
    });
    edges
        .into_iter()
        .take(SALIENT_EDGES)
        .map(|e| SalientEdge { from: names[e.from].clone(), to: names[e.to].clone(), weight: e.weight })
        .collect()
}

pub fn context_labels(mix: &SpMixture, sps: &[StandardPhenotypeDef]) -> Vec<String> {
    mix.ranked().into_iter().take(2).map(|m| sps[m].name.clone()).collect()
}

pub fn phenotype_state(
    model: &ClusterModel,
    m: &EncodedMatrix,
    mix: &SpMixture,
    sps: &[StandardPhenotypeDef],
    causal: &CausalGraph,
) -> PhenotypeState {
    let profile = cluster_profile(model, m, mix.cluster_id);
    PhenotypeState {
        cluster_id: mix.cluster_id,
        dominant_features: dominant_features(&profile, &m.column_names),
        salient_edges: salient_edges(causal, &m.column_names),
        context: context_labels(mix, sps),
        exploratory: false,
    }
}
