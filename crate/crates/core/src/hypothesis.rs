//! PICO hypotheses per phenotype and the six-part novelty-plausibility
//! score (NPS).
//!
//! Scoring runs in two phases. Before retrieval a candidate is ranked on
//! the five data-driven components; once literature counts are known the
//! literature-scarcity term joins and the final NPS is computed.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::causal::{strongest_path, CausalGraph};
use crate::evidence::wire::{Service, Transport, WireRequest};
use crate::phenotype::PhenotypeState;
use crate::probnet::{self, BayesNet};
use crate::{Error, Result};

pub const DEFAULT_MAX_HYPOTHESES: usize = 10;
pub const DEFAULT_COMPARISON: &str = "no intervention";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub cluster_id: usize,
    pub population: String,
    pub sp_labels: Vec<String>,
    pub intervention: String,
    pub comparison: String,
    pub outcome: String,
    /// `(i, ii)` feature indices: intervention → outcome.
    pub source_pair: (usize, usize),
    pub provenance: Provenance,
    #[serde(default)]
    pub exploratory: bool,
}

pub fn display_name(feature: &str) -> String {
    feature.replace(['_', '-'], " ").to_lowercase()
}

impl Hypothesis {
    pub fn natural_id(cluster_id: usize, pair: (usize, usize)) -> String {
        format!("h{}-{}-{}", cluster_id, pair.0, pair.1)
    }

    /// Plain-text rendering used for lexical matching against documents.
    pub fn text(&self) -> String {
        format!(
            "{} and {} in {} compared with {}",
            display_name(&self.intervention),
            display_name(&self.outcome),
            self.population,
            self.comparison
        )
    }

    /// Literature query: conjunction of intervention, outcome and population
    /// terms.
    pub fn query(&self) -> String {
        let mut q = format!(
            "\"{}\" AND \"{}\"",
            display_name(&self.intervention),
            display_name(&self.outcome)
        );
        if let Some(label) = self.sp_labels.first() {
            q.push_str(&format!(" AND ({})", display_name(label)));
        }
        q
    }
}

/// "individuals in phenotype k characterized by {SP labels} with elevated
/// {dominant features}".
pub fn population_text(ps: &PhenotypeState) -> String {
    let elevated: Vec<String> = ps
        .dominant_features
        .iter()
        .filter(|d| d.deviation > 0.0)
        .map(|d| display_name(&d.name))
        .collect();
    let reduced: Vec<String> = ps
        .dominant_features
        .iter()
        .filter(|d| d.deviation < 0.0)
        .map(|d| display_name(&d.name))
        .collect();
    let mut text = format!("individuals in phenotype {}", ps.cluster_id);
    if !ps.context.is_empty() {
        text.push_str(&format!(" characterized by {}", ps.context.join(" and ")));
    }
    if !elevated.is_empty() {
        text.push_str(&format!(" with elevated {}", elevated.join(", ")));
    }
    if !reduced.is_empty() {
        text.push_str(&format!(
            "{} reduced {}",
            if elevated.is_empty() { " with" } else { " and" },
            reduced.join(", ")
        ));
    }
    text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpsWeights {
    pub theta: [f64; 6],
}

impl Default for NpsWeights {
    fn default() -> Self {
        Self { theta: [1.0 / 6.0; 6] }
    }
}

impl NpsWeights {
    pub fn validate(&self) -> Result<()> {
        if self.theta.iter().any(|t| *t < 0.0 || !t.is_finite()) {
            return Err(Error::config("theta", "weights must be non-negative"));
        }
        let sum: f64 = self.theta.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("theta", format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Unnormalized component values for one candidate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawComponents {
    pub s_struct: f64,
    pub s_path: f64,
    pub s_prob: f64,
    pub s_mb: f64,
    pub s_var: f64,
    pub s_lit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpsBreakdown {
    pub raw: RawComponents,
    /// Order: struct, path, prob, mb, var, lit.
    pub normalized: [f64; 6],
    pub nps: f64,
}

impl NpsBreakdown {
    pub fn from_normalized(raw: RawComponents, normalized: [f64; 6], w: &NpsWeights) -> Self {
        let nps = normalized.iter().zip(&w.theta).map(|(c, t)| c * t).sum();
        Self { raw, normalized, nps }
    }

    /// Weighted mean of the five components known before retrieval.
    pub fn pre_retrieval(&self, w: &NpsWeights) -> f64 {
        let mass: f64 = w.theta[..5].iter().sum();
        if mass == 0.0 {
            return 0.0;
        }
        self.normalized[..5].iter().zip(&w.theta[..5]).map(|(c, t)| c * t).sum::<f64>() / mass
    }
}

/// Population variance; a single graph gives 0.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

pub fn raw_components(
    pair: (usize, usize),
    cg: &CausalGraph,
    bn: &BayesNet,
    all_graphs: &[&CausalGraph],
    lit_support: f64,
) -> Result<RawComponents> {
    let (i, ii) = pair;
    let weights: Vec<f64> = all_graphs.iter().map(|g| g.weight(i, ii)).collect();
    Ok(RawComponents {
        s_struct: cg.weight(i, ii).abs(),
        s_path: strongest_path(cg, i, ii).1,
        s_prob: probnet::influence(bn, i, ii)?,
        s_mb: if probnet::markov_blanket(bn, ii).contains(&i) { 0.0 } else { 1.0 },
        s_var: variance(&weights),
        s_lit: 1.0 - lit_support.clamp(0.0, 1.0),
    })
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if hi - lo > 1e-15 {
                (v - lo) / (hi - lo)
            } else if v > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Min-max normalizes struct/path/prob/var across the batch; MB and
/// literature terms are already in [0, 1].
pub fn score_batch(raws: &[RawComponents], w: &NpsWeights) -> Vec<NpsBreakdown> {
    let col = |f: fn(&RawComponents) -> f64| min_max(&raws.iter().map(f).collect::<Vec<_>>());
    let st = col(|r| r.s_struct);
    let pa = col(|r| r.s_path);
    let pr = col(|r| r.s_prob);
    let va = col(|r| r.s_var);
    raws.iter()
        .enumerate()
        .map(|(k, r)| {
            let normalized = [st[k], pa[k], pr[k], r.s_mb, va[k], r.s_lit.clamp(0.0, 1.0)];
            NpsBreakdown::from_normalized(*r, normalized, w)
        })
        .collect()
}

/// Final NPS of one hypothesis scored as a batch of one.
pub fn score_nps(
    h: &Hypothesis,
    cg: &CausalGraph,
    bn: &BayesNet,
    all_graphs: &[&CausalGraph],
    lit_support: f64,
    w: &NpsWeights,
) -> Result<NpsBreakdown> {
    let raw = raw_components(h.source_pair, cg, bn, all_graphs, lit_support)?;
    Ok(score_batch(&[raw], w).remove(0))
}

/// True when proposing `from → to` would reverse a learned edge.
pub fn reverses_edge(cg: &CausalGraph, from: usize, to: usize) -> bool {
    cg.has_edge(to, from) && !cg.has_edge(from, to)
}

/// Structured request handed to a hypothesis-generating backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRequest {
    pub task: String,
    pub phenotype: PhenotypeState,
    pub features: Vec<String>,
    pub edges: Vec<(String, String, f64)>,
    pub markov_blankets: BTreeMap<String, Vec<String>>,
    pub max_hypotheses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicoTuple {
    pub population: String,
    pub intervention: String,
    #[serde(default)]
    pub comparison: Option<String>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResponse {
    pub hypotheses: Vec<PicoTuple>,
}

pub trait HypothesisBackend {
    fn propose(&self, req: &HypothesisRequest) -> Result<Vec<PicoTuple>>;
}

/// Hypothesis backend reached over a [`Transport`]: the request is posted
/// as JSON and the reply parsed as a [`HypothesisResponse`].
pub struct RemoteHypotheses<T> {
    pub transport: T,
}

impl<T: Transport> HypothesisBackend for RemoteHypotheses<T> {
    fn propose(&self, req: &HypothesisRequest) -> Result<Vec<PicoTuple>> {
        let body = serde_json::to_string(req)?;
        let raw = self.transport.send(&WireRequest::post(Service::Hypotheses, body))?;
        let resp: HypothesisResponse =
            serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("hypothesis response: {e}")))?;
        Ok(resp.hypotheses)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConfig {
    pub max_hypotheses: usize,
    pub weights: NpsWeights,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self { max_hypotheses: DEFAULT_MAX_HYPOTHESES, weights: NpsWeights::default() }
    }
}

/// A generated hypothesis with its pre-retrieval breakdown (`s_lit` still
/// at its no-literature value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHypothesis {
    pub hypothesis: Hypothesis,
    pub preliminary: NpsBreakdown,
    pub pre_score: f64,
}

pub struct PhenotypeContext<'a> {
    pub ps: &'a PhenotypeState,
    pub cg: &'a CausalGraph,
    pub bn: &'a BayesNet,
    pub all_graphs: &'a [&'a CausalGraph],
    pub names: &'a [String],
}

fn build_request(ctx: &PhenotypeContext<'_>, max: usize) -> HypothesisRequest {
    let names = ctx.names;
    HypothesisRequest {
        task: "generate_hypotheses".into(),
        phenotype: ctx.ps.clone(),
        features: names.to_vec(),
        edges: ctx.cg.edges.iter().map(|e| (names[e.from].clone(), names[e.to].clone(), e.weight)).collect(),
        markov_blankets: (0..names.len())
            .map(|x| {
                let mb = probnet::markov_blanket(ctx.bn, x).into_iter().map(|m| names[m].clone()).collect();
                (names[x].clone(), mb)
            })
            .collect(),
        max_hypotheses: max,
    }
}

fn feature_index(names: &[String], text: &str) -> Option<usize> {
    let wanted = display_name(text);
    names.iter().position(|n| display_name(n) == wanted)
}

/// Ranks candidate pairs on the five pre-retrieval components and renders
/// the top ones as PICO hypotheses. With a backend, its proposals replace
/// the template set (same direction filter); a failing backend falls back
/// to templates.
pub fn generate_hypotheses(
    ctx: &PhenotypeContext<'_>,
    cfg: &HypothesisConfig,
    backend: Option<&dyn HypothesisBackend>,
) -> Result<Vec<RankedHypothesis>> {
    let f = ctx.names.len();
    let mut pairs = Vec::new();
    for i in 0..f {
        for ii in 0..f {
            if i != ii && !reverses_edge(ctx.cg, i, ii) {
                pairs.push((i, ii));
            }
        }
    }
    let raws = pairs
        .iter()
        .map(|&p| raw_components(p, ctx.cg, ctx.bn, ctx.all_graphs, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let scored = score_batch(&raws, &cfg.weights);
    let by_pair: BTreeMap<(usize, usize), NpsBreakdown> =
        pairs.iter().copied().zip(scored.iter().cloned()).collect();

    let population = population_text(ctx.ps);
    let make = |pair: (usize, usize), population: String, comparison: Option<String>, provenance| {
        let preliminary = by_pair[&pair].clone();
        RankedHypothesis {
            pre_score: preliminary.pre_retrieval(&cfg.weights),
            preliminary,
            hypothesis: Hypothesis {
                id: Hypothesis::natural_id(ctx.ps.cluster_id, pair),
                cluster_id: ctx.ps.cluster_id,
                population,
                sp_labels: ctx.ps.context.clone(),
                intervention: ctx.names[pair.0].clone(),
                comparison: comparison.unwrap_or_else(|| DEFAULT_COMPARISON.to_string()),
                outcome: ctx.names[pair.1].clone(),
                source_pair: pair,
                provenance,
                exploratory: ctx.ps.exploratory,
            },
        }
    };

    if let Some(backend) = backend {
        match backend.propose(&build_request(ctx, cfg.max_hypotheses)) {
            Ok(tuples) => {
                let mut seen = BTreeSet::new();
                let mut out = Vec::new();
                for t in tuples {
                    let (Some(i), Some(ii)) =
                        (feature_index(ctx.names, &t.intervention), feature_index(ctx.names, &t.outcome))
                    else {
                        warn!("backend hypothesis references unknown features: {t:?}");
                        continue;
                    };
                    if i == ii || reverses_edge(ctx.cg, i, ii) || !seen.insert((i, ii)) {
                        continue;
                    }
                    out.push(make((i, ii), t.population, t.comparison, Provenance::Llm));
                    if out.len() == cfg.max_hypotheses {
                        break;
                    }
                }
                return Ok(out);
            }
            Err(e) => warn!("hypothesis backend failed ({e}); using templates"),
        }
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let pre: Vec<f64> = scored.iter().map(|s| s.pre_retrieval(&cfg.weights)).collect();
    order.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]).then(pairs[a].cmp(&pairs[b])));
    Ok(order
        .into_iter()
        .take(cfg.max_hypotheses)
        .map(|k| make(pairs[k], population.clone(), None, Provenance::Template))
        .collect())
}
