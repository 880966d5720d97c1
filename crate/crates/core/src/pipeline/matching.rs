//! Online matching of new states against a finished run, with the
//! accelerated pipeline for promoted candidate phenotypes.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{
    final_nps, load_aliases, read_json, score_retrieval, write_json, Backends, BnArtifact, CausalArtifact,
    ClusterArtifact, IngestArtifact, PipelineConfig, ScoringContext, KG_DIR,
};
use crate::causal::CausalGraph;
use crate::evidence::{retrieve, EntityLinker};
use crate::hypothesis::{generate_hypotheses, HypothesisBackend, HypothesisConfig, PhenotypeContext};
use crate::ingest::load_dataset;
use crate::kgraph::{self, expand, graphml, pareto_front, persist, ExpansionReport};
use crate::linalg;
use crate::online::{
    process_state, CandidateBuffer, CandidatePhenotype, DecisionRecord, IsolationForest, OnlineEncoder,
};
use crate::phenotype::{context_labels, dominant_features, salient_edges, PhenotypeState, SpMixture};
use crate::rng::derive_seed;
use crate::{Error, Result};

pub const ONLINE_DIR: &str = "online";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub candidate: usize,
    pub phenotype_id: usize,
    /// Training phenotype whose causal graph and network were reused.
    pub nearest_cluster: usize,
    pub size: usize,
    pub hypotheses: Vec<String>,
    pub expansion: ExpansionReport,
}

/// Persistent state of the online path for one run directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OnlineSession {
    pub seen: usize,
    pub buffer: CandidateBuffer,
    pub promotions: Vec<Promotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub records: Vec<DecisionRecord>,
    pub promotions: Vec<Promotion>,
}

fn session_path() -> String {
    format!("{ONLINE_DIR}/session.json")
}

struct Trained {
    ia: IngestArtifact,
    ca: ClusterArtifact,
    cz: CausalArtifact,
    ba: BnArtifact,
}

impl Trained {
    fn load(out: &Path) -> Result<Self> {
        Ok(Self {
            ia: read_json(out, "ingest.json")?,
            ca: read_json(out, "cluster.json")?,
            cz: read_json(out, "causal.json")?,
            ba: read_json(out, "bn.json")?,
        })
    }

    fn encoder(&self) -> OnlineEncoder {
        OnlineEncoder {
            encoders: self.ia.matrix.encoders.clone(),
            names: self.ia.matrix.column_names.clone(),
            template: self.ia.template.clone(),
            params: self.ca.params.clone(),
        }
    }
}

/// Encoder for new states of a finished run in `out`.
pub fn online_encoder(out: &Path) -> Result<OnlineEncoder> {
    Ok(Trained::load(out)?.encoder())
}

/// Runs the accelerated pipeline for `cand` against the finished run in
/// `cfg.output`, appending to its knowledge graph as phenotype
/// `phenotype_id`.
pub fn promote_candidate(cfg: &PipelineConfig, cand: &CandidatePhenotype, phenotype_id: usize) -> Result<Promotion> {
    let t = Trained::load(&cfg.output)?;
    accelerate(cfg, cand, phenotype_id, &t, &Backends::from_config(cfg)?)
}

/// Reads new-state rows (same columns as the training file), decides each
/// one, buffers anomalies, and runs the accelerated pipeline for every
/// candidate that reaches the promotion threshold. Decision records are
/// appended to `online/decisions.jsonl`.
pub fn match_states(cfg: &PipelineConfig, input: &Path) -> Result<MatchOutcome> {
    let out = cfg.output.as_path();
    let t = Trained::load(out)?;
    let (ia, ca) = (&t.ia, &t.ca);
    let mut session: OnlineSession = match read_json(out, &session_path()) {
        Ok(s) => s,
        Err(Error::MissingArtifact(_)) => OnlineSession::default(),
        Err(e) => return Err(e),
    };

    let encoder = t.encoder();
    let forest = IsolationForest::fit(&ca.embeddings, &cfg.online.iforest, derive_seed(cfg.seed, "iforest"));
    let ds = load_dataset(input, &ia.schema)?;
    let n_train = ia.matrix.n_states();
    let mut backends = None;
    let mut outcome = MatchOutcome { records: Vec::new(), promotions: Vec::new() };

    for record in &ds.records {
        let id = n_train + session.seen;
        session.seen += 1;
        let state = encoder.encode_record(id, record, &ca.model, &ca.mixtures)?;
        let rec = process_state(&state, &ca.model, &ca.mixtures, &forest, &mut session.buffer, &cfg.online)?;
        if let Some(o) = rec.candidate.filter(|o| o.promoted) {
            if backends.is_none() {
                backends = Some(Backends::from_config(cfg)?);
            }
            let phenotype_id = ca.model.k + session.promotions.len();
            let cand = session.buffer.candidates[o.candidate].clone();
            let p = accelerate(cfg, &cand, phenotype_id, &t, backends.as_ref().expect("set above"))?;
            info!("candidate {} promoted to phenotype {phenotype_id}", o.candidate);
            session.promotions.push(p.clone());
            outcome.promotions.push(p);
        }
        outcome.records.push(rec);
    }

    let log = out.join(ONLINE_DIR).join("decisions.jsonl");
    fs::create_dir_all(out.join(ONLINE_DIR)).map_err(|e| Error::io(out.join(ONLINE_DIR), e))?;
    let mut lines = String::new();
    for r in &outcome.records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log)
        .and_then(|mut f| f.write_all(lines.as_bytes()))
        .map_err(|e| Error::io(&log, e))?;
    write_json(out, &session_path(), &session)?;
    Ok(outcome)
}

/// Limited pipeline for a promoted candidate: the nearest training
/// phenotype lends its causal graph and network, a few hypotheses are
/// generated and grounded, and everything added to the graph is flagged
/// exploratory.
fn accelerate(
    cfg: &PipelineConfig,
    cand: &CandidatePhenotype,
    phenotype_id: usize,
    t: &Trained,
    backends: &Backends,
) -> Result<Promotion> {
    let (ia, ca, cz, ba) = (&t.ia, &t.ca, &t.cz, &t.ba);
    let names = &ia.matrix.column_names;
    let k = ca.model.k;
    let mut mean_pi = vec![0.0; k];
    for s in &cand.exemplars {
        for (m, p) in mean_pi.iter_mut().zip(&s.pi) {
            *m += p;
        }
    }
    let nearest = crate::phenotype::argmax(&mean_pi);

    let profile = cand.profile();
    let sims = ca.standard_phenotypes.iter().map(|sp| linalg::cosine(&profile, &sp.signature).unwrap_or(0.0)).collect();
    let mix = SpMixture::from_similarities(phenotype_id, sims, cfg.cluster.sp_temperature);
    let mut cg: CausalGraph = cz.graphs[nearest].clone();
    cg.cluster_id = phenotype_id;
    let mut bn = ba.nets[nearest].clone();
    bn.cluster_id = phenotype_id;
    let ps = PhenotypeState {
        cluster_id: phenotype_id,
        dominant_features: dominant_features(&profile, names),
        salient_edges: salient_edges(&cg, names),
        context: context_labels(&mix, &ca.standard_phenotypes),
        exploratory: true,
    };

    let mut all: Vec<&CausalGraph> = cz.graphs.iter().collect();
    all.push(&cg);
    let hcfg = HypothesisConfig { max_hypotheses: cfg.online.accelerated_hypotheses, weights: cfg.nps_weights() };
    let remote = backends.hypothesis_backend();
    let ctx = PhenotypeContext { ps: &ps, cg: &cg, bn: &bn, all_graphs: &all, names };
    let ranked = generate_hypotheses(&ctx, &hcfg, remote.as_ref().map(|r| r as &dyn HypothesisBackend))?;

    let w = &cfg.evidence.weights;
    let aliases = load_aliases(cfg.data.aliases.as_deref())?;
    let linker = EntityLinker::new(names, &aliases);
    let sctx = ScoringContext { ps: &ps, cg: &cg, bn: &bn, names, linker: &linker, weights: w };
    let mut retrievals = Vec::new();
    let mut claims = Vec::new();
    let mut finals = Vec::new();
    for rh in &ranked {
        let r = retrieve(&rh.hypothesis, backends.literature.as_ref(), cfg.online.accelerated_documents, w)?;
        let b = final_nps(rh, r.lit_support, &cfg.nps_weights());
        claims.extend(score_retrieval(&sctx, &r, b.nps, true, backends.claims.as_ref())?.0);
        finals.push(b);
        retrievals.push(r);
    }

    let out = cfg.output.as_path();
    let kg_dir = out.join(KG_DIR);
    let mut g = kgraph::load(&kg_dir)?;
    g.add_phenotype(&ps, &mix, &ca.sp_names(), cand.n_c)?;
    g.add_causal_graph(&cg, names, true)?;
    for (rh, b) in ranked.iter().zip(&finals) {
        g.add_hypothesis(&rh.hypothesis, b)?;
    }
    g.commit();
    let front = pareto_front(claims);
    let expansion = expand(&mut g, &front, &retrievals, w)?;
    persist(&mut g, &kg_dir)?;
    let gml = kg_dir.join("graph.graphml");
    fs::write(&gml, graphml(&g)).map_err(|e| Error::io(&gml, e))?;

    let p = Promotion {
        candidate: cand.id,
        phenotype_id,
        nearest_cluster: nearest,
        size: cand.n_c,
        hypotheses: ranked.iter().map(|r| r.hypothesis.id.clone()).collect(),
        expansion,
    };
    write_json(
        out,
        &format!("{ONLINE_DIR}/promotion-{phenotype_id}.json"),
        &serde_json::json!({
            "promotion": p,
            "phenotype": ps,
            "mixture": mix,
            "hypotheses": ranked,
            "retrievals": retrievals,
            "front": front,
        }),
    )?;
    Ok(p)
}
