//! Pareto selection over scored claims and the typed knowledge graph they
//! expand.
//!
//! Node ids are `<kind>:<natural key>`, so adding the same entity twice is
//! a no-op. Every mutation is recorded as a [`Change`]; [`KnowledgeGraph::commit`]
//! stamps pending changes with the next version.

mod pareto;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::causal::CausalGraph;
use crate::evidence::{normalize, Entity, Retrieval, ScoreWeights};
use crate::hypothesis::{Hypothesis, NpsBreakdown};
use crate::phenotype::{PhenotypeState, SpMixture};
use crate::{Error, Result};

pub use pareto::{dominates, front_indices, pareto_front, ParetoFront};
pub use store::{graphml, load, persist, CHANGELOG_FILE, SNAPSHOT_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Feature,
    Phenotype,
    StandardPhenotype,
    Hypothesis,
    Document,
    Claim,
    ExternalEntity,
}

impl NodeKind {
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Feature => "feature",
            NodeKind::Phenotype => "phenotype",
            NodeKind::StandardPhenotype => "standard-phenotype",
            NodeKind::Hypothesis => "hypothesis",
            NodeKind::Document => "document",
            NodeKind::Claim => "claim",
            NodeKind::ExternalEntity => "external-entity",
        }
    }

    pub fn id(self, key: &str) -> String {
        format!("{}:{key}", self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    HasPhenotype,
    MapsToSp,
    Hypothesizes,
    SupportedBy,
    Claims,
    SubjectOf,
    ObjectOf,
    CausalEdge,
}

impl EdgeKind {
    pub fn label(self) -> &'static str {
        match self {
            EdgeKind::HasPhenotype => "has-phenotype",
            EdgeKind::MapsToSp => "maps-to-sp",
            EdgeKind::Hypothesizes => "hypothesizes",
            EdgeKind::SupportedBy => "supported-by",
            EdgeKind::Claims => "claims",
            EdgeKind::SubjectOf => "subject-of",
            EdgeKind::ObjectOf => "object-of",
            EdgeKind::CausalEdge => "causal-edge",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub type Attrs = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub exploratory: bool,
    pub attrs: Attrs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: String,
    pub to: String,
    /// Distinguishes parallel edges of one kind, e.g. the cluster a causal
    /// edge was learned in.
    #[serde(default)]
    pub scope: String,
    #[serde(default)]
    pub exploratory: bool,
    pub attrs: Attrs,
}

impl Edge {
    pub fn key(&self) -> String {
        format!("{}|{}|{}|{}", self.kind, self.from, self.to, self.scope)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeOp {
    AddNode,
    UpdateNode,
    AddEdge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub version: u64,
    pub op: ChangeOp,
    pub id: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub version: u64,
    pub nodes: BTreeMap<String, Node>,
    /// Keyed by [`Edge::key`].
    pub edges: BTreeMap<String, Edge>,
    /// Mutations since the last commit; versions are filled in on commit.
    #[serde(skip)]
    pending: Vec<Change>,
    /// Committed changes not yet written to the change log.
    #[serde(skip)]
    unsaved: Vec<Change>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn edges_of(&self, kind: EdgeKind) -> impl Iterator<Item = &Edge> {
        self.edges.values().filter(move |e| e.kind == kind)
    }

    /// Inserts a node unless one with the same id exists. Returns whether
    /// the graph changed.
    pub fn add_node(&mut self, kind: NodeKind, key: &str, attrs: Attrs, exploratory: bool) -> bool {
        let id = kind.id(key);
        if self.nodes.contains_key(&id) {
            return false;
        }
        self.pending.push(Change { version: 0, op: ChangeOp::AddNode, id: id.clone() });
        self.nodes.insert(id.clone(), Node { id, kind, exploratory, attrs });
        true
    }

    /// Sets one attribute on an existing node; a no-op when unchanged.
    pub fn set_attr(&mut self, id: &str, name: &str, value: Value) -> bool {
        let Some(node) = self.nodes.get_mut(id) else { return false };
        if node.attrs.get(name) == Some(&value) {
            return false;
        }
        node.attrs.insert(name.to_string(), value);
        self.pending.push(Change { version: 0, op: ChangeOp::UpdateNode, id: id.to_string() });
        true
    }

    pub fn add_edge(
        &mut self,
        kind: EdgeKind,
        from: &str,
        to: &str,
        scope: &str,
        attrs: Attrs,
        exploratory: bool,
    ) -> Result<bool> {
        for end in [from, to] {
            if !self.nodes.contains_key(end) {
                return Err(Error::MissingNode(end.to_string()));
            }
        }
        let edge = Edge { kind, from: from.into(), to: to.into(), scope: scope.into(), exploratory, attrs };
        let key = edge.key();
        if self.edges.contains_key(&key) {
            return Ok(false);
        }
        self.pending.push(Change { version: 0, op: ChangeOp::AddEdge, id: key.clone() });
        self.edges.insert(key, edge);
        Ok(true)
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Stamps pending changes with `version + 1`. Without pending changes
    /// the version is left alone.
    pub fn commit(&mut self) -> u64 {
        if !self.pending.is_empty() {
            self.version += 1;
            let v = self.version;
            self.unsaved.extend(self.pending.drain(..).map(|mut c| {
                c.version = v;
                c
            }));
        }
        self.version
    }

    pub(crate) fn take_unsaved(&mut self) -> Vec<Change> {
        std::mem::take(&mut self.unsaved)
    }

    pub fn add_features(&mut self, names: &[String]) {
        for (i, name) in names.iter().enumerate() {
            self.add_node(NodeKind::Feature, name, Attrs::from([("index".into(), json!(i))]), false);
        }
    }

    pub fn add_standard_phenotypes(&mut self, names: &[String]) {
        for name in names {
            self.add_node(NodeKind::StandardPhenotype, name, Attrs::new(), false);
        }
    }

    /// Phenotype node plus its dominant-feature and SP-mixture edges.
    /// Feature and SP nodes must already exist.
    pub fn add_phenotype(&mut self, ps: &PhenotypeState, mix: &SpMixture, sp_names: &[String], size: usize) -> Result<()> {
        let key = ps.cluster_id.to_string();
        let id = NodeKind::Phenotype.id(&key);
        let attrs = Attrs::from([
            ("cluster_id".into(), json!(ps.cluster_id)),
            ("size".into(), json!(size)),
            ("context".into(), json!(ps.context)),
        ]);
        self.add_node(NodeKind::Phenotype, &key, attrs, ps.exploratory);
        for d in &ps.dominant_features {
            let attrs = Attrs::from([("deviation".into(), json!(d.deviation))]);
            self.add_edge(EdgeKind::HasPhenotype, &NodeKind::Feature.id(&d.name), &id, "", attrs, ps.exploratory)?;
        }
        for (m, name) in sp_names.iter().enumerate() {
            let attrs = Attrs::from([("omega".into(), json!(mix.omega[m]))]);
            self.add_edge(EdgeKind::MapsToSp, &id, &NodeKind::StandardPhenotype.id(name), "", attrs, ps.exploratory)?;
        }
        Ok(())
    }

    pub fn add_causal_graph(&mut self, cg: &CausalGraph, names: &[String], exploratory: bool) -> Result<()> {
        let scope = cg.cluster_id.to_string();
        for e in &cg.edges {
            let attrs = Attrs::from([("weight".into(), json!(e.weight)), ("cluster_id".into(), json!(cg.cluster_id))]);
            self.add_edge(
                EdgeKind::CausalEdge,
                &NodeKind::Feature.id(&names[e.from]),
                &NodeKind::Feature.id(&names[e.to]),
                &scope,
                attrs,
                exploratory,
            )?;
        }
        Ok(())
    }

    pub fn add_hypothesis(&mut self, h: &Hypothesis, nps: &NpsBreakdown) -> Result<()> {
        let attrs = Attrs::from([
            ("population".into(), json!(h.population)),
            ("intervention".into(), json!(h.intervention)),
            ("comparison".into(), json!(h.comparison)),
            ("outcome".into(), json!(h.outcome)),
            ("provenance".into(), json!(h.provenance)),
            ("nps".into(), json!(nps.nps)),
            ("nps_components".into(), json!(nps.normalized)),
        ]);
        self.add_node(NodeKind::Hypothesis, &h.id, attrs, h.exploratory);
        self.add_edge(
            EdgeKind::Hypothesizes,
            &NodeKind::Phenotype.id(&h.cluster_id.to_string()),
            &NodeKind::Hypothesis.id(&h.id),
            "",
            Attrs::new(),
            h.exploratory,
        )?;
        Ok(())
    }

    fn entity_node(&mut self, e: &Entity, exploratory: bool) -> String {
        match &e.feature {
            Some(f) if self.nodes.contains_key(&NodeKind::Feature.id(f)) => NodeKind::Feature.id(f),
            _ => {
                let key = normalize(&e.text);
                self.add_node(NodeKind::ExternalEntity, &key, Attrs::from([("text".into(), json!(e.text))]), exploratory);
                NodeKind::ExternalEntity.id(&key)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub claims_added: usize,
    pub documents_added: usize,
    pub edges_added: usize,
    pub version: u64,
}

/// Adds the front claims with `Y ≥ τ_c`, then every retained document
/// (`M ≥ τ_d`) of the hypotheses those claims came from, with connecting
/// edges. A claim whose hypothesis is not in the graph, or whose document
/// is neither in the graph nor retained, rejects the whole batch before
/// anything is written. Re-applying a batch changes nothing.
pub fn expand(
    g: &mut KnowledgeGraph,
    front: &ParetoFront,
    retrievals: &[Retrieval],
    w: &ScoreWeights,
) -> Result<ExpansionReport> {
    let selected: Vec<_> = front.members().filter(|c| c.validation >= w.tau_c).collect();
    let hypotheses: BTreeSet<&str> = selected.iter().map(|c| c.claim.hypothesis_id.as_str()).collect();
    let sources: Vec<&Retrieval> =
        retrievals.iter().filter(|r| hypotheses.contains(r.hypothesis_id.as_str())).collect();
    let incoming: BTreeSet<&str> =
        sources.iter().flat_map(|r| r.retained(w)).map(|d| d.doc_id.as_str()).collect();
    for sc in &selected {
        let c = &sc.claim;
        let known_doc = incoming.contains(c.doc_id.as_str()) || g.nodes.contains_key(&NodeKind::Document.id(&c.doc_id));
        if !g.nodes.contains_key(&NodeKind::Hypothesis.id(&c.hypothesis_id)) || !known_doc {
            return Err(Error::DanglingReference { claim: c.claim_id.clone(), hypothesis: c.hypothesis_id.clone() });
        }
    }

    // One node per claim id; a claim reached from several hypotheses keeps
    // its highest parent NPS.
    let mut by_id: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for sc in &selected {
        by_id.entry(sc.claim.claim_id.as_str()).or_default().push(*sc);
    }

    let before_nodes = g.nodes.len();
    let before_edges = g.edges.len();
    let mut claims_added = 0;
    let mut documents_added = 0;

    for r in sources {
        let h_id = NodeKind::Hypothesis.id(&r.hypothesis_id);
        let exploratory = g.nodes[&h_id].exploratory;
        for d in r.retained(w) {
            let attrs = Attrs::from([
                ("title".into(), json!(d.title)),
                ("year".into(), json!(d.year)),
                ("study_type".into(), json!(d.study_type)),
            ]);
            if g.add_node(NodeKind::Document, &d.doc_id, attrs, exploratory) {
                documents_added += 1;
            }
            let attrs = Attrs::from([("match_score".into(), json!(d.match_score))]);
            g.add_edge(EdgeKind::SupportedBy, &h_id, &NodeKind::Document.id(&d.doc_id), "", attrs, exploratory)?;
        }
    }

    for (claim_id, group) in by_id {
        let best = group.iter().copied().max_by(|a, b| a.nps.total_cmp(&b.nps)).unwrap();
        if group.len() > 1 {
            info!("claim {claim_id} reached from {} hypotheses; keeping max NPS {}", group.len(), best.nps);
        }
        let c = &best.claim;
        let exploratory = group.iter().any(|s| s.exploratory);
        let parents: Vec<&str> = group.iter().map(|s| s.claim.hypothesis_id.as_str()).collect();
        let attrs = Attrs::from([
            ("subject".into(), json!(c.subject)),
            ("relation".into(), json!(c.relation)),
            ("object".into(), json!(c.object)),
            ("doc_id".into(), json!(c.doc_id)),
            ("hypotheses".into(), json!(parents)),
            ("evidence_type".into(), json!(c.evidence_type)),
            ("confidence".into(), json!(c.confidence)),
            ("context".into(), json!(c.context)),
            ("recommendation".into(), json!(c.recommendation)),
            ("relevance".into(), json!(best.relevance)),
            ("validation".into(), json!(best.validation)),
            ("nps".into(), json!(best.nps)),
        ]);
        let id = NodeKind::Claim.id(claim_id);
        if g.add_node(NodeKind::Claim, claim_id, attrs, exploratory) {
            claims_added += 1;
        } else if (!exploratory || g.nodes[&id].exploratory)
            && g.nodes[&id].attrs.get("nps").and_then(Value::as_f64).is_some_and(|old| best.nps > old)
        {
            // Exploratory evidence never rewrites a confirmed node.
            g.set_attr(&id, "nps", json!(best.nps));
        }
        let doc_id = NodeKind::Document.id(&c.doc_id);
        g.add_edge(EdgeKind::Claims, &doc_id, &id, "", Attrs::new(), exploratory)?;
        let s = g.entity_node(&c.subject, exploratory);
        g.add_edge(EdgeKind::SubjectOf, &s, &id, "", Attrs::new(), exploratory)?;
        let o = g.entity_node(&c.object, exploratory);
        g.add_edge(EdgeKind::ObjectOf, &o, &id, "", Attrs::new(), exploratory)?;
    }

    let version = g.commit();
    Ok(ExpansionReport {
        claims_added,
        documents_added,
        edges_added: g.edges.len() - before_edges,
        version,
    })
    .inspect(|r| {
        info!(
            "expansion v{}: +{} claims, +{} documents, +{} nodes total, +{} edges",
            r.version,
            r.claims_added,
            r.documents_added,
            g.nodes.len() - before_nodes,
            r.edges_added
        )
    })
}

#[cfg(test)]
mod tests;
