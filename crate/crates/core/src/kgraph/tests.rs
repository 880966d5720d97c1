use super::*;
use crate::evidence::{Claim, Document, Relation, ScoredClaim, StudyType};
use crate::hypothesis::{Provenance, RawComponents, DEFAULT_COMPARISON};
use crate::phenotype::DominantFeature;

fn names() -> Vec<String> {
    vec!["stress".into(), "sleep".into()]
}

fn hypothesis(id: &str) -> Hypothesis {
    Hypothesis {
        id: id.into(),
        cluster_id: 0,
        population: "p".into(),
        sp_labels: vec!["anxiety".into()],
        intervention: "stress".into(),
        comparison: DEFAULT_COMPARISON.into(),
        outcome: "sleep".into(),
        source_pair: (0, 1),
        provenance: Provenance::Template,
        exploratory: false,
    }
}

fn nps(v: f64) -> NpsBreakdown {
    let raw = RawComponents { s_struct: 0.0, s_path: 0.0, s_prob: 0.0, s_mb: 0.0, s_var: 0.0, s_lit: 0.0 };
    NpsBreakdown { raw, normalized: [v; 6], nps: v }
}

fn base() -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    g.add_features(&names());
    g.add_standard_phenotypes(&["anxiety".to_string()]);
    let ps = PhenotypeState {
        cluster_id: 0,
        dominant_features: vec![DominantFeature { index: 0, name: "stress".into(), deviation: 1.2 }],
        salient_edges: Vec::new(),
        context: vec!["anxiety".into()],
        exploratory: false,
    };
    let mix = SpMixture::from_similarities(0, vec![0.5], 0.5);
    g.add_phenotype(&ps, &mix, &["anxiety".to_string()], 10).unwrap();
    g.add_hypothesis(&hypothesis("h0-0-1"), &nps(0.5)).unwrap();
    g.commit();
    g
}

fn scored(id: &str, doc: &str, r: f64, y: f64, n: f64) -> ScoredClaim {
    ScoredClaim {
        claim: Claim {
            claim_id: id.into(),
            hypothesis_id: "h0-0-1".into(),
            doc_id: doc.into(),
            subject: Entity { text: "stress".into(), feature: Some("stress".into()) },
            relation: Relation::Worsens,
            object: Entity { text: "gut microbiome".into(), feature: None },
            evidence_type: "rct".into(),
            confidence: 0.8,
            context: String::new(),
            recommendation: String::new(),
        },
        cluster_id: 0,
        relevance: r,
        validation: y,
        nps: n,
        exploratory: false,
    }
}

fn retrieval(docs: &[(&str, f64)]) -> Retrieval {
    Retrieval {
        hypothesis_id: "h0-0-1".into(),
        query: String::new(),
        hits: docs.len(),
        documents: docs
            .iter()
            .map(|(id, m)| {
                let mut d = Document::new(id, "t", "a", 2020, StudyType::Rct);
                d.match_score = *m;
                d
            })
            .collect(),
        skipped: 0,
        lit_support: 0.0,
    }
}

#[test]
fn expansion_respects_thresholds_and_is_idempotent() {
    let mut g = base();
    let v0 = g.version;
    let w = ScoreWeights::default();
    let front = pareto_front(vec![scored("c1", "d1", 0.9, 0.39, 0.2), scored("c2", "d1", 0.1, 0.8, 0.9)]);
    assert_eq!(front.front.len(), 2);
    let rets = vec![retrieval(&[("d1", 0.5), ("d2", 0.36), ("d3", 0.2)])];
    let report = expand(&mut g, &front, &rets, &w).unwrap();
    assert_eq!(report.claims_added, 1);
    assert_eq!(report.documents_added, 2);
    assert_eq!(g.version, v0 + 1);
    assert!(g.node("claim:c2").is_some());
    assert!(g.node("claim:c1").is_none());
    assert!(g.node("document:d3").is_none());
    assert!(g.node("external-entity:gut microbiome").is_some());

    let snapshot = g.clone();
    let again = expand(&mut g, &front, &rets, &w).unwrap();
    assert_eq!(again.claims_added + again.documents_added + again.edges_added, 0);
    assert_eq!(g, snapshot);
}

#[test]
fn dangling_hypothesis_rejects_batch() {
    let mut g = base();
    let before = g.clone();
    let mut bad = scored("c9", "d1", 1.0, 0.95, 0.1);
    bad.claim.hypothesis_id = "h9-9-9".into();
    let front = pareto_front(vec![scored("c1", "d1", 0.9, 0.9, 0.9), bad]);
    let r = expand(&mut g, &front, &[retrieval(&[("d1", 0.9)])], &ScoreWeights::default());
    assert!(matches!(r, Err(Error::DanglingReference { .. })));
    assert_eq!(g, before);
    assert!(!g.has_pending());
}

#[test]
fn empty_graph_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = KnowledgeGraph::new();
    persist(&mut g, dir.path()).unwrap();
    assert_eq!(load(dir.path()).unwrap(), g);
}

#[test]
fn populated_round_trip_and_change_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = base();
    persist(&mut g, dir.path()).unwrap();
    let front = pareto_front(vec![scored("c2", "d1", 0.1, 0.8, 0.9)]);
    expand(&mut g, &front, &[retrieval(&[("d1", 0.5)])], &ScoreWeights::default()).unwrap();
    persist(&mut g, dir.path()).unwrap();
    let back = load(dir.path()).unwrap();
    assert_eq!(back, g);
    let log = std::fs::read_to_string(dir.path().join(CHANGELOG_FILE)).unwrap();
    let versions: Vec<u64> =
        log.lines().map(|l| serde_json::from_str::<Change>(l).unwrap().version).collect();
    assert_eq!(*versions.last().unwrap(), g.version);
    assert!(versions.windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn truncated_or_tampered_snapshot_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = base();
    persist(&mut g, dir.path()).unwrap();
    let path = dir.path().join(SNAPSHOT_FILE);
    let text = std::fs::read_to_string(&path).unwrap();

    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load(dir.path()), Err(Error::CorruptFile { .. })));

    std::fs::write(&path, text.replace("anxiety", "anxietx")).unwrap();
    assert!(matches!(load(dir.path()), Err(Error::CorruptFile { .. })));
}

#[test]
fn log_ahead_of_snapshot_is_version_skew() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = base();
    persist(&mut g, dir.path()).unwrap();
    let snap = std::fs::read(dir.path().join(SNAPSHOT_FILE)).unwrap();
    let front = pareto_front(vec![scored("c2", "d1", 0.1, 0.8, 0.9)]);
    expand(&mut g, &front, &[retrieval(&[("d1", 0.5)])], &ScoreWeights::default()).unwrap();
    persist(&mut g, dir.path()).unwrap();
    std::fs::write(dir.path().join(SNAPSHOT_FILE), snap).unwrap();
    assert!(matches!(load(dir.path()), Err(Error::VersionSkew { snapshot: 1, log: 2 })));
}

#[test]
fn graphml_is_well_formed() {
    let mut g = base();
    let front = pareto_front(vec![scored("c2", "d1", 0.1, 0.8, 0.9)]);
    expand(&mut g, &front, &[retrieval(&[("d1", 0.5)])], &ScoreWeights::default()).unwrap();
    let xml = graphml(&g);
    let mut reader = quick_xml::Reader::from_str(&xml);
    let (mut nodes, mut edges) = (0, 0);
    loop {
        match reader.read_event().unwrap() {
            quick_xml::events::Event::Start(e) if e.name().as_ref() == b"node" => nodes += 1,
            quick_xml::events::Event::Start(e) if e.name().as_ref() == b"edge" => edges += 1,
            quick_xml::events::Event::Eof => break,
            _ => {}
        }
    }
    assert_eq!((nodes, edges), (g.nodes.len(), g.edges.len()));
}
