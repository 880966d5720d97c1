//! Claim extraction: backend wire schema, entity linking, and an offline
//! rule-based extractor that speaks the same schema.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::wire::{Service, Transport, WireRequest};
use super::Document;
use crate::hypothesis::display_name;
use crate::phenotype::PhenotypeState;
use crate::{Error, Result};

pub const FUZZY_LINK_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Increases,
    Decreases,
    Improves,
    Worsens,
    Associates,
    Mediates,
    NoEffect,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::Increases,
        Relation::Decreases,
        Relation::Improves,
        Relation::Worsens,
        Relation::Associates,
        Relation::Mediates,
        Relation::NoEffect,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Relation::Increases => "increases",
            Relation::Decreases => "decreases",
            Relation::Improves => "improves",
            Relation::Worsens => "worsens",
            Relation::Associates => "associates",
            Relation::Mediates => "mediates",
            Relation::NoEffect => "no-effect",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Relation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().to_lowercase().replace(['_', ' '], "-");
        Relation::ALL
            .into_iter()
            .find(|r| r.label() == norm)
            .ok_or_else(|| format!("relation `{s}` is not in the vocabulary"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub text: String,
    /// Linked schema feature, if any.
    pub feature: Option<String>,
}

impl Entity {
    pub fn key(&self) -> String {
        self.feature.clone().unwrap_or_else(|| normalize(&self.text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub hypothesis_id: String,
    pub doc_id: String,
    pub subject: Entity,
    pub relation: Relation,
    pub object: Entity,
    pub evidence_type: String,
    pub confidence: f64,
    pub context: String,
    pub recommendation: String,
}

impl Claim {
    /// `(subject, relation, object, doc_id)`, with linked feature names
    /// standing in for entity text where available.
    pub fn natural_key(&self) -> String {
        format!("{}|{}|{}|{}", self.subject.key(), self.relation, self.object.key(), self.doc_id)
    }

    pub fn id_for(key: &str) -> String {
        let digest = Sha256::digest(key.as_bytes());
        format!("c-{}", hex::encode(&digest[..6]))
    }
}

/// Lowercase, non-alphanumerics to single spaces.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Maps free-text entity mentions to schema features: exact alias or
/// feature-name hit first, then the best normalized edit similarity at or
/// above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityLinker {
    features: Vec<String>,
    /// normalized surface form → feature index
    surface: BTreeMap<String, usize>,
    pub threshold: f64,
}

impl EntityLinker {
    pub fn new(features: &[String], aliases: &BTreeMap<String, Vec<String>>) -> Self {
        let mut surface = BTreeMap::new();
        for (k, f) in features.iter().enumerate() {
            surface.insert(normalize(&display_name(f)), k);
        }
        for (feature, alts) in aliases {
            match features.iter().position(|f| f == feature) {
                Some(k) => {
                    for a in alts {
                        surface.insert(normalize(a), k);
                    }
                }
                None => warn!("alias entry for unknown feature `{feature}` ignored"),
            }
        }
        Self { features: features.to_vec(), surface, threshold: FUZZY_LINK_THRESHOLD }
    }

    pub fn link(&self, mention: &str) -> Option<usize> {
        let m = normalize(mention);
        if m.is_empty() {
            return None;
        }
        if let Some(&k) = self.surface.get(&m) {
            return Some(k);
        }
        let mut best: Option<(f64, usize)> = None;
        for (form, &k) in &self.surface {
            let sim = strsim::normalized_levenshtein(&m, form);
            if sim >= self.threshold && best.is_none_or(|(s, _)| sim > s) {
                best = Some((sim, k));
            }
        }
        best.map(|(_, k)| k)
    }

    pub fn entity(&self, mention: &str) -> Entity {
        Entity { text: mention.trim().to_string(), feature: self.link(mention).map(|k| self.features[k].clone()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDocument {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: i32,
    pub study_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub task: String,
    pub document: WireDocument,
    pub phenotype: PhenotypeState,
    pub causal_edges: Vec<(String, String, f64)>,
    pub relations: Vec<String>,
}

impl ClaimRequest {
    pub fn new(d: &Document, ps: &PhenotypeState, causal_edges: Vec<(String, String, f64)>) -> Self {
        Self {
            task: "extract_claims".into(),
            document: WireDocument {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                abstract_text: d.abstract_text.clone(),
                year: d.year,
                study_type: d.study_type.label().into(),
            },
            phenotype: ps.clone(),
            causal_edges,
            relations: Relation::ALL.iter().map(|r| r.label().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireClaim {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub evidence_type: String,
    pub confidence: f64,
    #[serde(default)]
    pub context: String,
    #[serde(default)]
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimResponse {
    pub claims: Vec<WireClaim>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub claims: Vec<Claim>,
    /// `(index in response, reason)` for claims that broke the schema.
    pub dropped: Vec<(usize, String)>,
}

fn validate_wire(w: &WireClaim, linker: &EntityLinker) -> std::result::Result<(Relation, Entity, Entity), String> {
    let relation: Relation = w.relation.parse()?;
    if normalize(&w.subject).is_empty() || normalize(&w.object).is_empty() {
        return Err("empty subject or object".into());
    }
    if !(0.0..=1.0).contains(&w.confidence) {
        return Err(format!("confidence {} outside [0, 1]", w.confidence));
    }
    let subject = linker.entity(&w.subject);
    let object = linker.entity(&w.object);
    if subject.key() == object.key() {
        return Err(format!("subject equals object (`{}`)", subject.key()));
    }
    Ok((relation, subject, object))
}

/// Sends one document to the claim backend and links the returned
/// entities. Claims violating the schema are dropped and reported.
pub fn extract_claims(
    d: &Document,
    ps: &PhenotypeState,
    causal_edges: Vec<(String, String, f64)>,
    hypothesis_id: &str,
    backend: &dyn Transport,
    linker: &EntityLinker,
) -> Result<Extraction> {
    let req = ClaimRequest::new(d, ps, causal_edges);
    let body = serde_json::to_string(&req)?;
    let raw = backend.send(&WireRequest::post(Service::Claims, body))?;
    let resp: ClaimResponse =
        serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("claim response for {}: {e}", d.doc_id)))?;
    let mut out = Extraction::default();
    for (idx, w) in resp.claims.into_iter().enumerate() {
        match validate_wire(&w, linker) {
            Ok((relation, subject, object)) => {
                let mut c = Claim {
                    claim_id: String::new(),
                    hypothesis_id: hypothesis_id.to_string(),
                    doc_id: d.doc_id.clone(),
                    subject,
                    relation,
                    object,
                    evidence_type: if w.evidence_type.is_empty() { d.study_type.label().into() } else { w.evidence_type },
                    confidence: w.confidence,
                    context: w.context,
                    recommendation: w.recommendation,
                };
                c.claim_id = Claim::id_for(&c.natural_key());
                out.claims.push(c);
            }
            Err(reason) => {
                warn!("doc {}: claim {idx} dropped: {reason}", d.doc_id);
                out.dropped.push((idx, reason));
            }
        }
    }
    Ok(out)
}

const SURFACE_FORMS: &[(&str, Relation)] = &[
    ("is associated with", Relation::Associates),
    ("was associated with", Relation::Associates),
    ("were associated with", Relation::Associates),
    ("correlates with", Relation::Associates),
    ("has no effect on", Relation::NoEffect),
    ("had no effect on", Relation::NoEffect),
    ("did not affect", Relation::NoEffect),
    ("increases", Relation::Increases),
    ("increased", Relation::Increases),
    ("raises", Relation::Increases),
    ("decreases", Relation::Decreases),
    ("decreased", Relation::Decreases),
    ("reduces", Relation::Decreases),
    ("reduced", Relation::Decreases),
    ("lowers", Relation::Decreases),
    ("improves", Relation::Improves),
    ("improved", Relation::Improves),
    ("worsens", Relation::Worsens),
    ("worsened", Relation::Worsens),
    ("impairs", Relation::Worsens),
    ("mediates", Relation::Mediates),
    ("mediated", Relation::Mediates),
    ("be associated with", Relation::Associates),
    ("increase", Relation::Increases),
    ("decrease", Relation::Decreases),
    ("reduce", Relation::Decreases),
    ("improve", Relation::Improves),
    ("worsen", Relation::Worsens),
];

const QUALIFIERS: &[&str] = &[
    "higher", "greater", "lower", "increased", "reduced", "more", "less", "elevated", "poor", "better", "longer",
    "shorter", "daily", "regular", "the", "a", "an",
];

const CONTEXT_MARKERS: &[&str] = &[" among ", " in ", " for ", " during "];

fn strip_qualifiers(phrase: &str) -> String {
    let mut words: Vec<&str> = phrase.split_whitespace().collect();
    while words.len() > 1 && QUALIFIERS.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

/// Pattern extractor for plain declarative sentences of the form
/// "[qualifier] subject <relation> object [among context]". Confidence is
/// 0.75, raised to 0.9 by "significantly" and lowered to 0.55 by "may" or
/// "might".
pub fn rule_extract(doc: &WireDocument) -> Vec<WireClaim> {
    let text = format!("{}. {}", doc.title, doc.abstract_text);
    let sentences: Vec<String> = text
        .split(['.', ';', '!', '?'])
        .map(|s| s.trim().to_lowercase())
        .filter(|s| !s.is_empty())
        .collect();
    let recommendation = sentences
        .iter()
        .filter(|s| s.contains("recommend") || s.contains("should"))
        .cloned()
        .collect::<Vec<_>>()
        .join(". ");
    let mut out = Vec::new();
    for s in &sentences {
        let padded = format!(" {s} ");
        let Some((pos, form, relation)) = SURFACE_FORMS
            .iter()
            .filter_map(|(form, r)| padded.find(&format!(" {form} ")).map(|p| (p, *form, *r)))
            .min_by_key(|(p, form, _)| (*p, std::cmp::Reverse(form.len())))
        else {
            continue;
        };
        let mut before = padded[..pos].trim().to_string();
        if let Some(idx) = before.rfind(" that ") {
            before = before[idx + 6..].to_string();
        }
        let cleaned = before.replace(" significantly", "").replace(" may", "").replace(" might", "");
        let subject = strip_qualifiers(&cleaned);
        let after = &padded[pos + form.len() + 2..];
        let (object_part, context) = CONTEXT_MARKERS
            .iter()
            .filter_map(|m| after.find(m).map(|i| (i, m.len())))
            .min()
            .map(|(i, len)| (&after[..i], after[i + len..].trim().to_string()))
            .unwrap_or((after, String::new()));
        let object = strip_qualifiers(object_part.trim());
        if subject.is_empty() || object.is_empty() {
            continue;
        }
        let confidence = if padded.contains(" significantly ") {
            0.9
        } else if padded.contains(" may ") || padded.contains(" might ") {
            0.55
        } else {
            0.75
        };
        out.push(WireClaim {
            subject,
            relation: relation.label().into(),
            object,
            evidence_type: doc.study_type.clone(),
            confidence,
            context,
            recommendation: recommendation.clone(),
        });
    }
    out
}

/// Offline claim backend built on [`rule_extract`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBackend;

impl Transport for RuleBackend {
    fn send(&self, req: &WireRequest) -> Result<String> {
        if req.service != Service::Claims {
            return Err(Error::BackendUnavailable(format!("rule backend cannot answer {}", req.service.name())));
        }
        let parsed: ClaimRequest = serde_json::from_str(&req.body)?;
        let resp = ClaimResponse { claims: rule_extract(&parsed.document) };
        Ok(serde_json::to_string_pretty(&resp)?)
    }
}
