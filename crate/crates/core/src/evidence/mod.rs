//! Literature retrieval, document matching, claim extraction, and claim
//! scoring.
//!
//! Documents are matched to a hypothesis by a blend of lexical relevance
//! and recency; claims are scored for relevance `R` (backend confidence,
//! population overlap, study design) and validation `Y` (agreement with
//! the phenotype's causal graph and Bayesian network).

mod claims;
pub mod pubmed;
pub mod text;
pub mod wire;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::causal::{strongest_path, CausalGraph};
use crate::hypothesis::{display_name, Hypothesis};
use crate::phenotype::PhenotypeState;
use crate::probnet::{self, BayesNet};
use crate::{Error, Result};

pub use claims::{
    extract_claims, normalize, rule_extract, Claim, ClaimRequest, ClaimResponse, Entity, EntityLinker, Extraction,
    Relation, RuleBackend, WireClaim, WireDocument, FUZZY_LINK_THRESHOLD,
};
use pubmed::{efetch_request, esearch_request, parse_efetch, parse_esearch};
use text::{jaccard, token_set, TfIdf};
use wire::Transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyType {
    MetaAnalysis,
    SystematicReview,
    Rct,
    Cohort,
    CrossSectional,
    CaseReport,
    Unknown,
}

impl StudyType {
    pub const ALL: [StudyType; 7] = [
        StudyType::MetaAnalysis,
        StudyType::SystematicReview,
        StudyType::Rct,
        StudyType::Cohort,
        StudyType::CrossSectional,
        StudyType::CaseReport,
        StudyType::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StudyType::MetaAnalysis => "meta-analysis",
            StudyType::SystematicReview => "systematic-review",
            StudyType::Rct => "rct",
            StudyType::Cohort => "cohort",
            StudyType::CrossSectional => "cross-sectional",
            StudyType::CaseReport => "case-report",
            StudyType::Unknown => "unknown",
        }
    }

    /// Strongest design named by the publication types, falling back to
    /// design keywords in the text.
    pub fn infer(publication_types: &[String], text: &str) -> Self {
        let rank = |t: &StudyType| StudyType::ALL.iter().position(|x| x == t).unwrap();
        let declared = publication_types.iter().filter_map(|p| match p.to_lowercase().as_str() {
            "meta-analysis" => Some(StudyType::MetaAnalysis),
            "systematic review" => Some(StudyType::SystematicReview),
            "randomized controlled trial" | "controlled clinical trial" => Some(StudyType::Rct),
            "case reports" => Some(StudyType::CaseReport),
            "observational study" => Some(StudyType::Cohort),
            _ => None,
        });
        if let Some(best) = declared.min_by_key(rank) {
            return best;
        }
        let t = text.to_lowercase();
        let keywords: [(&str, StudyType); 8] = [
            ("meta-analysis", StudyType::MetaAnalysis),
            ("systematic review", StudyType::SystematicReview),
            ("randomized controlled", StudyType::Rct),
            ("randomised controlled", StudyType::Rct),
            ("cohort", StudyType::Cohort),
            ("longitudinal", StudyType::Cohort),
            ("cross-sectional", StudyType::CrossSectional),
            ("case report", StudyType::CaseReport),
        ];
        keywords
            .into_iter()
            .filter(|(k, _)| t.contains(k))
            .map(|(_, st)| st)
            .min_by_key(rank)
            .unwrap_or(StudyType::Unknown)
    }
}

impl fmt::Display for StudyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StudyType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().to_lowercase().replace(['_', ' '], "-");
        StudyType::ALL
            .into_iter()
            .find(|t| t.label() == norm)
            .ok_or_else(|| format!("unknown study type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: i32,
    pub study_type: StudyType,
    #[serde(default)]
    pub f_rel: f64,
    #[serde(default)]
    pub f_rec: f64,
    #[serde(default)]
    pub match_score: f64,
}

impl Document {
    pub fn new(doc_id: &str, title: impl Into<String>, abstract_text: impl Into<String>, year: i32, study_type: StudyType) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            year,
            study_type,
            f_rel: 0.0,
            f_rec: 0.0,
            match_score: 0.0,
        }
    }

    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }
}

/// Evidence strength per study design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceTable {
    pub meta_analysis: f64,
    pub systematic_review: f64,
    pub rct: f64,
    pub cohort: f64,
    pub cross_sectional: f64,
    pub case_report: f64,
    pub unknown: f64,
}

impl Default for EvidenceTable {
    fn default() -> Self {
        Self {
            meta_analysis: 1.0,
            systematic_review: 0.9,
            rct: 0.85,
            cohort: 0.6,
            cross_sectional: 0.5,
            case_report: 0.3,
            unknown: 0.4,
        }
    }
}

impl EvidenceTable {
    pub fn strength(&self, t: StudyType) -> f64 {
        match t {
            StudyType::MetaAnalysis => self.meta_analysis,
            StudyType::SystematicReview => self.systematic_review,
            StudyType::Rct => self.rct,
            StudyType::Cohort => self.cohort,
            StudyType::CrossSectional => self.cross_sectional,
            StudyType::CaseReport => self.case_report,
            StudyType::Unknown => self.unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    /// Document match: relevance, recency.
    pub alpha: [f64; 2],
    /// Claim relevance: backend confidence, population overlap, evidence.
    pub omega: [f64; 3],
    /// Claim validation: causal support, probabilistic support.
    pub beta: [f64; 2],
    pub tau_d: f64,
    pub tau_c: f64,
    pub half_life_years: f64,
    pub lit_cap: usize,
    /// Year that document ages are measured from. Fixed rather than read
    /// from the clock so runs are reproducible.
    pub reference_year: i32,
    pub evidence: EvidenceTable,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            alpha: [0.7, 0.3],
            omega: [0.4, 0.3, 0.3],
            beta: [0.6, 0.4],
            tau_d: 0.35,
            tau_c: 0.4,
            half_life_years: 5.0,
            lit_cap: 50,
            reference_year: 2026,
            evidence: EvidenceTable::default(),
        }
    }
}

fn check_group(key: &str, w: &[f64]) -> Result<()> {
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::config(key, "weights must be non-negative"));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(key, format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        check_group("alpha", &self.alpha)?;
        check_group("omega", &self.omega)?;
        check_group("beta", &self.beta)?;
        for (key, v) in [("tau_d", self.tau_d), ("tau_c", self.tau_c)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, "threshold must lie in [0, 1]"));
            }
        }
        if !(self.half_life_years > 0.0) {
            return Err(Error::config("half_life_years", "must be positive"));
        }
        if self.lit_cap == 0 {
            return Err(Error::config("lit_cap", "must be positive"));
        }
        let e = &self.evidence;
        for v in [e.meta_analysis, e.systematic_review, e.rct, e.cohort, e.cross_sectional, e.case_report, e.unknown] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config("evidence", "strengths must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// `exp(-max(0, reference_year - year) / half_life)`.
pub fn recency(year: i32, w: &ScoreWeights) -> f64 {
    let age = (w.reference_year - year).max(0) as f64;
    (-age / w.half_life_years).exp()
}

pub fn combine_match(f_rel: f64, f_rec: f64, w: &ScoreWeights) -> f64 {
    w.alpha[0] * f_rel + w.alpha[1] * f_rec
}

/// Scores every document against the hypothesis, with IDF fitted over the
/// documents plus the hypothesis text.
pub fn score_documents(docs: &mut [Document], h: &Hypothesis, w: &ScoreWeights) {
    let h_text = h.text();
    let mut corpus: Vec<String> = docs.iter().map(Document::text).collect();
    corpus.push(h_text.clone());
    let model = TfIdf::fit(&corpus);
    for (d, text) in docs.iter_mut().zip(&corpus) {
        d.f_rel = model.cosine(text, &h_text);
        d.f_rec = recency(d.year, w);
        d.match_score = combine_match(d.f_rel, d.f_rec, w);
    }
}

/// Match score of a single document.
pub fn match_score(d: &Document, h: &Hypothesis, w: &ScoreWeights) -> f64 {
    let mut one = [d.clone()];
    score_documents(&mut one, h, w);
    one[0].match_score
}

pub fn lit_support(hits: usize, w: &ScoreWeights) -> f64 {
    (hits as f64 / w.lit_cap as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub hypothesis_id: String,
    pub query: String,
    /// Total hits reported by the search, before the fetch limit.
    pub hits: usize,
    /// Parsed documents, scored, in search order.
    pub documents: Vec<Document>,
    pub skipped: usize,
    pub lit_support: f64,
}

impl Retrieval {
    pub fn retained(&self, w: &ScoreWeights) -> impl Iterator<Item = &Document> {
        let tau = w.tau_d;
        self.documents.iter().filter(move |d| d.match_score >= tau)
    }
}

/// Searches for the hypothesis query, fetches up to `limit` records, and
/// scores them. `lit_support = min(1, hits / lit_cap)`, with `hits` the
/// search's total count.
pub fn retrieve(h: &Hypothesis, backend: &dyn Transport, limit: usize, w: &ScoreWeights) -> Result<Retrieval> {
    let query = h.query();
    let found = parse_esearch(&backend.send(&esearch_request(&query, limit))?)?;
    let (mut documents, skipped) = if found.ids.is_empty() {
        (Vec::new(), 0)
    } else {
        parse_efetch(&backend.send(&efetch_request(&found.ids))?)?
    };
    if skipped > 0 {
        warn!("{}: {skipped} malformed records skipped", h.id);
    }
    score_documents(&mut documents, h, w);
    info!("{}: {} hits, {} fetched", h.id, found.count, documents.len());
    Ok(Retrieval {
        hypothesis_id: h.id.clone(),
        query,
        hits: found.count,
        lit_support: lit_support(found.count, w),
        documents,
        skipped,
    })
}

/// Tokens describing the phenotype: SP labels and dominant feature names.
pub fn phenotype_terms(ps: &PhenotypeState) -> BTreeSet<String> {
    let mut text = ps.context.join(" ");
    for d in &ps.dominant_features {
        text.push(' ');
        text.push_str(&display_name(&d.name));
    }
    token_set(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceParts {
    pub f_llm: f64,
    pub f_pop: f64,
    pub f_ev: f64,
}

pub fn relevance_parts(c: &Claim, d: &Document, ps: &PhenotypeState, w: &ScoreWeights) -> RelevanceParts {
    let study = c.evidence_type.parse().unwrap_or(d.study_type);
    RelevanceParts {
        f_llm: c.confidence.clamp(0.0, 1.0),
        f_pop: jaccard(&token_set(&c.context), &phenotype_terms(ps)),
        f_ev: w.evidence.strength(study),
    }
}

pub fn combine_relevance(p: &RelevanceParts, w: &ScoreWeights) -> f64 {
    w.omega[0] * p.f_llm + w.omega[1] * p.f_pop + w.omega[2] * p.f_ev
}

/// `R = ω₁·confidence + ω₂·population overlap + ω₃·evidence strength`.
/// Population overlap is the Jaccard index between the claim's context
/// tokens and the phenotype's terms.
pub fn relevance(c: &Claim, d: &Document, ps: &PhenotypeState, w: &ScoreWeights) -> f64 {
    combine_relevance(&relevance_parts(c, d, ps, w), w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationParts {
    pub f_causal: f64,
    pub f_bn: f64,
}

pub fn validation_parts(
    c: &Claim,
    cg: &CausalGraph,
    bn: &BayesNet,
    names: &[String],
) -> Result<ValidationParts> {
    let index = |e: &Entity| e.feature.as_ref().and_then(|f| names.iter().position(|n| n == f));
    let (Some(s), Some(o)) = (index(&c.subject), index(&c.object)) else {
        return Ok(ValidationParts { f_causal: 0.0, f_bn: 0.0 });
    };
    let w_max = cg.max_abs_weight();
    let f_causal = if w_max == 0.0 || (cg.has_edge(o, s) && !cg.has_edge(s, o)) {
        0.0
    } else if cg.has_edge(s, o) {
        (cg.weight(s, o).abs() / w_max).min(1.0)
    } else {
        (strongest_path(cg, s, o).1 / w_max).min(1.0)
    };
    let f_bn = if probnet::markov_blanket(bn, o).contains(&s) { 1.0 } else { probnet::influence(bn, s, o)? };
    Ok(ValidationParts { f_causal, f_bn })
}

/// `Y = β₁·f_causal + β₂·f_BN`; unlinked entities score 0.
pub fn validation(c: &Claim, cg: &CausalGraph, bn: &BayesNet, names: &[String], w: &ScoreWeights) -> Result<f64> {
    let p = validation_parts(c, cg, bn, names)?;
    Ok(w.beta[0] * p.f_causal + w.beta[1] * p.f_bn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredClaim {
    pub claim: Claim,
    pub cluster_id: usize,
    pub relevance: f64,
    pub validation: f64,
    pub nps: f64,
    #[serde(default)]
    pub exploratory: bool,
}

impl ScoredClaim {
    /// `(R, Y, NPS)`.
    pub fn objectives(&self) -> [f64; 3] {
        [self.relevance, self.validation, self.nps]
    }
}
