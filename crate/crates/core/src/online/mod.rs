//! Matching new states against learned phenotypes.
//!
//! A new state is encoded with the training encoders, scored against each
//! phenotype by a blend of embedding and standard-phenotype similarity, and
//! classified as a match, a soft match over several phenotypes, or an
//! anomaly. Anomalies confirmed by the isolation forest accumulate in
//! candidate phenotypes until one has enough support to be promoted.

mod iforest;

use serde::{Deserialize, Serialize};

use crate::embed::{encode_state, EncoderParams};
use crate::ingest::{encode_record_with, state_graph, ColumnEncoder, EdgeTemplate};
use crate::linalg;
use crate::phenotype::{argmax, soft_assign, ClusterModel, SpMixture};
use crate::{Error, Result};

pub use iforest::{average_path_length, IForestConfig, IsolationForest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    /// Weight of embedding similarity against SP-space similarity.
    pub alpha: f64,
    pub tau_match: f64,
    pub tau_anom: f64,
    /// Support needed to promote a candidate phenotype.
    pub tau_nc: usize,
    /// Soft matches keep clusters scoring at least this fraction of the best.
    pub soft_ratio: f64,
    /// Minimum cosine to a candidate centroid for an anomaly to join it.
    pub merge_cosine: f64,
    pub iforest: IForestConfig,
    pub accelerated_hypotheses: usize,
    pub accelerated_documents: usize,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            tau_match: 0.6,
            tau_anom: 0.3,
            tau_nc: 5,
            soft_ratio: 0.8,
            merge_cosine: 0.9,
            iforest: IForestConfig::default(),
            accelerated_hypotheses: 3,
            accelerated_documents: 5,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("online.alpha", "must lie in [0, 1]"));
        }
        if !(self.tau_anom < self.tau_match) {
            return Err(Error::config("online.tau_anom", "must be below tau_match"));
        }
        if self.tau_nc == 0 {
            return Err(Error::config("online.tau_nc", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.soft_ratio) {
            return Err(Error::config("online.soft_ratio", "must lie in [0, 1]"));
        }
        if self.iforest.trees == 0 || self.iforest.subsample == 0 {
            return Err(Error::config("online.iforest", "trees and subsample must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineState {
    pub state_id: usize,
    /// Standardized feature values.
    pub values: Vec<f64>,
    pub z: Vec<f64>,
    /// Soft assignment over phenotypes.
    pub pi: Vec<f64>,
    /// `Σ_k π_k Ω_k`: the state's position in standard-phenotype space.
    pub pi_sp: Vec<f64>,
}

pub fn sp_projection(pi: &[f64], mixtures: &[SpMixture]) -> Vec<f64> {
    let m = mixtures.first().map_or(0, |x| x.omega.len());
    let mut out = vec![0.0; m];
    for (p, mix) in pi.iter().zip(mixtures) {
        for (o, w) in out.iter_mut().zip(&mix.omega) {
            *o += p * w;
        }
    }
    out
}

/// Everything from training needed to place a new raw record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineEncoder {
    pub encoders: Vec<ColumnEncoder>,
    pub names: Vec<String>,
    pub template: EdgeTemplate,
    pub params: EncoderParams,
}

impl OnlineEncoder {
    pub fn encode_values(
        &self,
        state_id: usize,
        values: Vec<f64>,
        model: &ClusterModel,
        mixtures: &[SpMixture],
    ) -> Result<OnlineState> {
        if values.len() != self.names.len() {
            return Err(Error::DimensionMismatch { expected: self.names.len(), got: values.len() });
        }
        let g = state_graph(state_id, &values, &self.names, &self.template);
        let z = encode_state(&g, &self.params)?.graph_vector;
        let pi = soft_assign(state_id, &z, model).pi;
        let pi_sp = sp_projection(&pi, mixtures);
        Ok(OnlineState { state_id, values, z, pi, pi_sp })
    }

    pub fn encode_record(
        &self,
        state_id: usize,
        record: &[String],
        model: &ClusterModel,
        mixtures: &[SpMixture],
    ) -> Result<OnlineState> {
        let values = encode_record_with(&self.encoders, record)?;
        self.encode_values(state_id, values, model, mixtures)
    }
}

fn rescaled_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    linalg::cosine(a, b).map(|c| (c + 1.0) / 2.0).ok_or(Error::ZeroVector)
}

/// `score_k = α·cos'(z, μ_k) + (1-α)·cos'(π_sp, Ω_k)` with cosines mapped
/// to [0, 1] by `(x + 1) / 2`.
pub fn score_state(s: &OnlineState, model: &ClusterModel, mixtures: &[SpMixture], cfg: &OnlineConfig) -> Result<Vec<f64>> {
    if mixtures.len() != model.k {
        return Err(Error::DimensionMismatch { expected: model.k, got: mixtures.len() });
    }
    model
        .centroids
        .iter()
        .zip(mixtures)
        .map(|(mu, mix)| {
            let structural = rescaled_cosine(&s.z, mu)?;
            let semantic = if cfg.alpha < 1.0 { rescaled_cosine(&s.pi_sp, &mix.omega)? } else { 0.0 };
            Ok(cfg.alpha * structural + (1.0 - cfg.alpha) * semantic)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Match { cluster: usize },
    /// Clusters within the soft ratio of the best, weights renormalized.
    SoftMatch { clusters: Vec<(usize, f64)> },
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    #[serde(flatten)]
    pub decision: Decision,
    pub score_star: f64,
    pub scores: Vec<f64>,
}

/// Exactly one outcome per score vector, given `τ_anom < τ_match`.
pub fn decide(scores: &[f64], cfg: &OnlineConfig) -> MatchDecision {
    let best = argmax(scores);
    let score_star = scores.get(best).copied().unwrap_or(f64::NEG_INFINITY);
    let decision = if score_star >= cfg.tau_match {
        Decision::Match { cluster: best }
    } else if score_star < cfg.tau_anom {
        Decision::Anomaly
    } else {
        let keep: Vec<usize> = (0..scores.len()).filter(|&k| scores[k] >= cfg.soft_ratio * score_star).collect();
        let total: f64 = keep.iter().map(|&k| scores[k]).sum();
        let mut clusters: Vec<(usize, f64)> = keep.iter().map(|&k| (k, scores[k] / total)).collect();
        clusters.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Decision::SoftMatch { clusters }
    };
    MatchDecision { decision, score_star, scores: scores.to_vec() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePhenotype {
    pub id: usize,
    pub exemplars: Vec<OnlineState>,
    pub centroid: Vec<f64>,
    pub sp_vector: Vec<f64>,
    pub n_c: usize,
    pub promoted: bool,
}

impl CandidatePhenotype {
    fn open(id: usize, s: &OnlineState) -> Self {
        Self { id, exemplars: vec![s.clone()], centroid: s.z.clone(), sp_vector: s.pi_sp.clone(), n_c: 1, promoted: false }
    }

    fn absorb(&mut self, s: &OnlineState) {
        self.n_c += 1;
        let n = self.n_c as f64;
        for (c, z) in self.centroid.iter_mut().zip(&s.z) {
            *c += (z - *c) / n;
        }
        for (c, p) in self.sp_vector.iter_mut().zip(&s.pi_sp) {
            *c += (p - *c) / n;
        }
        self.exemplars.push(s.clone());
    }

    /// Mean standardized feature values of the exemplars.
    pub fn profile(&self) -> Vec<f64> {
        let f = self.exemplars.first().map_or(0, |s| s.values.len());
        let mut out = vec![0.0; f];
        for s in &self.exemplars {
            for (o, v) in out.iter_mut().zip(&s.values) {
                *o += v / self.exemplars.len() as f64;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateBuffer {
    pub candidates: Vec<CandidatePhenotype>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferOutcome {
    pub candidate: usize,
    pub n_c: usize,
    /// True only on the call that crossed the promotion threshold.
    pub promoted: bool,
}

/// Adds an anomalous state to the nearest candidate whose centroid has
/// cosine at least `merge_cosine`, or opens a new candidate.
pub fn buffer_candidate(buffer: &mut CandidateBuffer, s: &OnlineState, cfg: &OnlineConfig) -> BufferOutcome {
    let nearest = buffer
        .candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| linalg::cosine(&s.z, &c.centroid).map(|cos| (i, cos)))
        .filter(|(_, cos)| *cos >= cfg.merge_cosine)
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
    let idx = match nearest {
        Some((i, _)) => {
            buffer.candidates[i].absorb(s);
            i
        }
        None => {
            let id = buffer.candidates.len();
            buffer.candidates.push(CandidatePhenotype::open(id, s));
            id
        }
    };
    let c = &mut buffer.candidates[idx];
    let promoted = !c.promoted && c.n_c >= cfg.tau_nc;
    if promoted {
        c.promoted = true;
    }
    BufferOutcome { candidate: idx, n_c: c.n_c, promoted }
}

/// One line of `match` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub state_id: usize,
    #[serde(flatten)]
    pub decision: MatchDecision,
    pub anomaly_score: f64,
    pub anomaly_indicator: i8,
    /// Combined criterion: the forest flags an outlier and the best
    /// score is below the anomaly threshold.
    pub anomalous: bool,
    pub candidate: Option<BufferOutcome>,
}

/// Full online path for one state: score, decide, consult the forest, and
/// buffer confirmed anomalies.
pub fn process_state(
    s: &OnlineState,
    model: &ClusterModel,
    mixtures: &[SpMixture],
    forest: &IsolationForest,
    buffer: &mut CandidateBuffer,
    cfg: &OnlineConfig,
) -> Result<DecisionRecord> {
    let scores = score_state(s, model, mixtures, cfg)?;
    let decision = decide(&scores, cfg);
    let anomaly_score = forest.score(&s.z);
    let anomaly_indicator = if anomaly_score > forest.cutoff { -1 } else { 1 };
    let anomalous = anomaly_indicator == -1 && decision.score_star < cfg.tau_anom;
    let candidate = anomalous.then(|| buffer_candidate(buffer, s, cfg));
    Ok(DecisionRecord { state_id: s.state_id, decision, anomaly_score, anomaly_indicator, anomalous, candidate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OnlineConfig {
        OnlineConfig::default()
    }

    #[test]
    fn decision_thresholds() {
        assert_eq!(decide(&[0.7, 0.2], &cfg()).decision, Decision::Match { cluster: 0 });
        assert_eq!(decide(&[0.2, 0.7], &cfg()).decision, Decision::Match { cluster: 1 });
        assert_eq!(decide(&[0.25, 0.2], &cfg()).decision, Decision::Anomaly);
        let d = decide(&[0.45, 0.42, 0.1], &cfg());
        match d.decision {
            Decision::SoftMatch { clusters } => {
                assert_eq!(clusters.len(), 2);
                assert_eq!((clusters[0].0, clusters[1].0), (0, 1));
                assert!((clusters[0].1 - 0.45 / 0.87).abs() < 1e-12);
                assert!((clusters[1].1 - 0.42 / 0.87).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    fn model(centroids: Vec<Vec<f64>>) -> ClusterModel {
        let k = centroids.len();
        ClusterModel {
            k,
            centroids,
            members: vec![Vec::new(); k],
            labels: Vec::new(),
            soft_temperature: 1.0,
            silhouette: 0.0,
            eigenvalues: Vec::new(),
            degenerate: false,
        }
    }

    #[test]
    fn identical_state_scores_one() {
        let m = model(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mixes = vec![
            SpMixture::from_similarities(0, vec![1.0, -1.0], 0.5),
            SpMixture::from_similarities(1, vec![-1.0, 1.0], 0.5),
        ];
        let s = OnlineState {
            state_id: 0,
            values: Vec::new(),
            z: vec![0.0, 1.0],
            pi: vec![0.0, 1.0],
            pi_sp: mixes[1].omega.clone(),
        };
        let scores = score_state(&s, &m, &mixes, &cfg()).unwrap();
        assert!((scores[1] - 1.0).abs() < 1e-12);
        assert!(scores[0] < scores[1]);

        let only_structure = OnlineConfig { alpha: 1.0, ..cfg() };
        let scores = score_state(&s, &m, &mixes, &only_structure).unwrap();
        assert!((scores[0] - 0.5).abs() < 1e-12);

        let zero = OnlineState { z: vec![0.0, 0.0], ..s };
        assert!(matches!(score_state(&zero, &m, &mixes, &cfg()), Err(Error::ZeroVector)));
    }

    fn state(z: Vec<f64>) -> OnlineState {
        OnlineState { state_id: 0, values: vec![1.0], z, pi: vec![1.0], pi_sp: vec![1.0] }
    }

    #[test]
    fn candidate_lifecycle() {
        let c = cfg();
        let mut buf = CandidateBuffer::default();
        let first = buffer_candidate(&mut buf, &state(vec![1.0, 0.0]), &c);
        assert_eq!((first.candidate, first.n_c, first.promoted), (0, 1, false));
        let mut promotions = 0;
        for k in 1..8 {
            let o = buffer_candidate(&mut buf, &state(vec![1.0, 0.01 * k as f64]), &c);
            promotions += o.promoted as usize;
            if o.n_c == 5 {
                assert!(o.promoted);
            }
        }
        assert_eq!(promotions, 1);
        assert_eq!(buf.candidates.len(), 1);

        let far = buffer_candidate(&mut buf, &state(vec![-1.0, 0.0]), &c);
        assert_eq!(far.candidate, 1);
        assert_eq!(buf.candidates.len(), 2);
    }

    #[test]
    fn running_centroid_is_mean() {
        let mut buf = CandidateBuffer::default();
        let c = OnlineConfig { merge_cosine: -1.0, ..cfg() };
        for z in [vec![1.0, 0.0], vec![3.0, 1.0], vec![2.0, 2.0]] {
            buffer_candidate(&mut buf, &state(z), &c);
        }
        let cen = &buf.candidates[0].centroid;
        assert!((cen[0] - 2.0).abs() < 1e-12 && (cen[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_ordering_is_validated() {
        assert!(OnlineConfig { tau_anom: 0.7, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
