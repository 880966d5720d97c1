//! Stage orchestration.
//!
//! Each stage reads the artifacts of the stages before it from the output
//! directory and writes its own, so any stage can be rerun alone and a run
//! can resume after the last stage whose artifacts still verify. The run
//! manifest lists every artifact with its sha256.

pub mod config;
mod matching;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::{fit_notears, CausalGraph, NotearsConfig};
use crate::embed::{encode_corpus, EncoderParams};
use crate::evidence::pubmed::CorpusTransport;
use crate::evidence::wire::{CachedTransport, FixtureTransport, HttpTransport, Transport};
use crate::evidence::{
    extract_claims, relevance, retrieve, validation, EntityLinker, Retrieval, RuleBackend, ScoreWeights, ScoredClaim,
};
use crate::hypothesis::{
    generate_hypotheses, HypothesisBackend, HypothesisConfig, NpsBreakdown, NpsWeights, PhenotypeContext,
    RankedHypothesis, RemoteHypotheses,
};
use crate::ingest::{build_edge_template, build_state_graphs, encode, load_dataset, EdgeTemplate, EncodedMatrix, FeatureDef};
use crate::kgraph::{expand, graphml, pareto_front, persist, KnowledgeGraph};
use crate::phenotype::{
    fit_clusters, map_to_standard, phenotype_state, soft_assign, ClusterConfig, ClusterModel, PhenotypeState,
    SoftAssignment, SpMixture, StandardPhenotypeDef,
};
use crate::probnet::{fit_bn, posterior, BayesNet, Discretization, Query};
use crate::rng::derive_seed;
use crate::{Error, Result};

pub use config::{
    load_aliases, load_standard_phenotypes, BackendMode, HypothesisSource, PipelineConfig,
};
pub use matching::{match_states, online_encoder, promote_candidate, MatchOutcome, OnlineSession, Promotion, ONLINE_DIR};
pub use report::write_report;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const KG_DIR: &str = "kg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Cluster,
    Causal,
    Bn,
    Hypothesize,
    Retrieve,
    Score,
    Expand,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Cluster,
        Stage::Causal,
        Stage::Bn,
        Stage::Hypothesize,
        Stage::Retrieve,
        Stage::Score,
        Stage::Expand,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::Causal => "causal",
            Stage::Bn => "bn",
            Stage::Hypothesize => "hypothesize",
            Stage::Retrieve => "retrieve",
            Stage::Score => "score",
            Stage::Expand => "expand",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestArtifact {
    pub schema: Vec<FeatureDef>,
    pub matrix: EncodedMatrix,
    pub template: EdgeTemplate,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub params: EncoderParams,
    /// Graph vectors, one per training state.
    pub embeddings: Vec<Vec<f64>>,
    pub model: ClusterModel,
    pub soft: Vec<SoftAssignment>,
    pub standard_phenotypes: Vec<StandardPhenotypeDef>,
    pub mixtures: Vec<SpMixture>,
}

impl ClusterArtifact {
    pub fn sp_names(&self) -> Vec<String> {
        self.standard_phenotypes.iter().map(|s| s.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalArtifact {
    pub graphs: Vec<CausalGraph>,
    pub phenotypes: Vec<PhenotypeState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnArtifact {
    pub discretizations: Vec<Discretization>,
    pub nets: Vec<BayesNet>,
    /// Per cluster, the marginal of every node.
    pub marginals: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesesArtifact {
    pub hypotheses: Vec<RankedHypothesis>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalArtifact {
    pub retrievals: Vec<Retrieval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedClaim {
    pub hypothesis_id: String,
    pub doc_id: String,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreArtifact {
    /// Final breakdown per hypothesis, literature term filled in.
    pub nps: BTreeMap<String, NpsBreakdown>,
    pub claims: Vec<ScoredClaim>,
    pub dropped: Vec<DroppedClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Input file → sha256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn entry(out: &Path, rel: &str) -> Result<ArtifactEntry> {
    let path = out.join(rel);
    let bytes = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
    Ok(ArtifactEntry { path: rel.to_string(), sha256: sha256_file(&path)?, bytes })
}

impl RunManifest {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        let mut files = vec![&cfg.data.path, &cfg.data.standard_phenotypes];
        files.extend(cfg.data.aliases.as_ref());
        if cfg.backend.mode == BackendMode::Corpus {
            files.extend(cfg.backend.corpus.as_ref());
        }
        for p in files {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            inputs,
            stages: Vec::new(),
        })
    }

    pub fn load(out: &Path) -> Result<Self> {
        read_json(out, MANIFEST_FILE)
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        write_json(out, MANIFEST_FILE, self).map(|_| ())
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Replaces the record for `rec.stage` and forgets every later stage,
    /// whose inputs may now have changed.
    pub fn upsert(&mut self, rec: StageRecord) {
        self.stages.retain(|r| r.stage < rec.stage);
        self.stages.push(rec);
    }

    /// True when every listed artifact exists with the recorded checksum.
    pub fn verify_stage(&self, out: &Path, stage: Stage) -> bool {
        self.record(stage).is_some_and(|r| {
            r.artifacts.iter().all(|a| sha256_file(&out.join(&a.path)).is_ok_and(|h| h == a.sha256))
        })
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &ArtifactEntry> {
        self.stages.iter().flat_map(|s| s.artifacts.iter())
    }
}

pub fn write_json<T: Serialize + ?Sized>(out: &Path, rel: &str, value: &T) -> Result<String> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(rel.to_string())
}

pub fn read_json<T: DeserializeOwned>(out: &Path, rel: &str) -> Result<T> {
    let path = out.join(rel);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArtifact(path)),
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| Error::CorruptFile { path, reason: e.to_string() })
}

/// Transports for the literature search, claim extraction and (optional)
/// hypothesis services.
pub struct Backends {
    pub literature: Box<dyn Transport>,
    pub claims: Box<dyn Transport>,
    pub hypotheses: Option<Box<dyn Transport>>,
}

fn recorded<T: Transport + 'static>(t: T, record: Option<&PathBuf>) -> Box<dyn Transport> {
    match record {
        Some(dir) => Box::new(CachedTransport::new(t, dir.clone())),
        None => Box::new(t),
    }
}

impl Backends {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let b = &cfg.backend;
        let remote_hypotheses = cfg.hypothesis.source == HypothesisSource::Remote;
        Ok(match b.mode {
            BackendMode::Fixtures => {
                let dir = b.fixtures.clone().ok_or_else(|| Error::config("backend.fixtures", "not set"))?;
                Backends {
                    literature: Box::new(FixtureTransport::new(dir.clone())),
                    claims: Box::new(FixtureTransport::new(dir.clone())),
                    hypotheses: remote_hypotheses.then(|| Box::new(FixtureTransport::new(dir)) as Box<dyn Transport>),
                }
            }
            BackendMode::Corpus => {
                let path = b.corpus.as_ref().ok_or_else(|| Error::config("backend.corpus", "not set"))?;
                Backends {
                    literature: recorded(CorpusTransport::load(path)?, b.record.as_ref()),
                    claims: recorded(RuleBackend, b.record.as_ref()),
                    hypotheses: None,
                }
            }
            BackendMode::Live => {
                let cache = Some(b.record.clone().unwrap_or_else(|| cfg.output.join("cache")));
                let http = || HttpTransport::new(b.http.clone());
                Backends {
                    literature: recorded(http(), cache.as_ref()),
                    claims: if b.http.claims_url.is_some() {
                        recorded(http(), cache.as_ref())
                    } else {
                        recorded(RuleBackend, cache.as_ref())
                    },
                    hypotheses: (remote_hypotheses && b.http.hypotheses_url.is_some())
                        .then(|| recorded(http(), cache.as_ref())),
                }
            }
        })
    }

    pub fn hypothesis_backend(&self) -> Option<RemoteHypotheses<&dyn Transport>> {
        self.hypotheses.as_deref().map(|t| RemoteHypotheses { transport: t })
    }
}

/// Rows of the encoded matrix belonging to `members`.
pub fn cluster_rows(m: &EncodedMatrix, members: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(members.len(), m.n_features(), |r, j| m.values[(members[r], j)])
}

/// NOTEARS on one phenotype. Columns constant within the phenotype are
/// left out of the fit and get no edges.
pub fn fit_structure(x: &DMatrix<f64>, cluster_id: usize, cfg: &NotearsConfig) -> Result<CausalGraph> {
    let f = x.ncols();
    let varying: Vec<usize> = (0..f)
        .filter(|&j| {
            let c = x.column(j);
            c.iter().any(|v| *v != c[0])
        })
        .collect();
    if varying.len() == f {
        return fit_notears(x, cluster_id, cfg);
    }
    info!("cluster {cluster_id}: {} constant columns left out of structure learning", f - varying.len());
    let mut w = DMatrix::zeros(f, f);
    let mut raw = DMatrix::zeros(f, f);
    let (mut h, mut converged) = (0.0, true);
    if varying.len() >= 2 {
        let sub = DMatrix::from_fn(x.nrows(), varying.len(), |i, j| x[(i, varying[j])]);
        let g = fit_notears(&sub, cluster_id, cfg)?;
        for (a, &i) in varying.iter().enumerate() {
            for (b, &ii) in varying.iter().enumerate() {
                w[(i, ii)] = g.w[(a, b)];
                raw[(i, ii)] = g.raw_w[(a, b)];
            }
        }
        h = g.h_final;
        converged = g.converged;
    }
    Ok(CausalGraph::from_weights(cluster_id, w, raw, h, converged))
}

/// Final breakdown once retrieval has filled the literature term. The
/// other five components keep their normalization from generation time.
pub fn final_nps(r: &RankedHypothesis, lit_support: f64, w: &NpsWeights) -> NpsBreakdown {
    let mut raw = r.preliminary.raw;
    raw.s_lit = 1.0 - lit_support.clamp(0.0, 1.0);
    let mut normalized = r.preliminary.normalized;
    normalized[5] = raw.s_lit;
    NpsBreakdown::from_normalized(raw, normalized, w)
}

/// Everything needed to score claims for one phenotype.
pub struct ScoringContext<'a> {
    pub ps: &'a PhenotypeState,
    pub cg: &'a CausalGraph,
    pub bn: &'a BayesNet,
    pub names: &'a [String],
    pub linker: &'a EntityLinker,
    pub weights: &'a ScoreWeights,
}

/// Extracts and scores claims from the retained documents of one
/// retrieval.
pub fn score_retrieval(
    ctx: &ScoringContext<'_>,
    r: &Retrieval,
    nps: f64,
    exploratory: bool,
    claims_backend: &dyn Transport,
) -> Result<(Vec<ScoredClaim>, Vec<DroppedClaim>)> {
    let edges: Vec<(String, String, f64)> =
        ctx.cg.edges.iter().map(|e| (ctx.names[e.from].clone(), ctx.names[e.to].clone(), e.weight)).collect();
    let mut claims = Vec::new();
    let mut dropped = Vec::new();
    for d in r.retained(ctx.weights) {
        let ex = extract_claims(d, ctx.ps, edges.clone(), &r.hypothesis_id, claims_backend, ctx.linker)?;
        for (index, reason) in ex.dropped {
            dropped.push(DroppedClaim { hypothesis_id: r.hypothesis_id.clone(), doc_id: d.doc_id.clone(), index, reason });
        }
        for c in ex.claims {
            let rel = relevance(&c, d, ctx.ps, ctx.weights);
            let val = validation(&c, ctx.cg, ctx.bn, ctx.names, ctx.weights)?;
            claims.push(ScoredClaim {
                claim: c,
                cluster_id: ctx.ps.cluster_id,
                relevance: rel,
                validation: val,
                nps,
                exploratory,
            });
        }
    }
    Ok((claims, dropped))
}

/// Runs stages against one output directory.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    backends: Option<Backends>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self { cfg, backends: None }
    }

    pub fn out(&self) -> &Path {
        &self.cfg.output
    }

    fn backends(&mut self) -> Result<&Backends> {
        if self.backends.is_none() {
            self.backends = Some(Backends::from_config(&self.cfg)?);
        }
        Ok(self.backends.as_ref().expect("just set"))
    }

    fn load<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        read_json(self.out(), rel)
    }

    fn save<T: Serialize>(&self, rel: &str, v: &T) -> Result<String> {
        write_json(self.out(), rel, v)
    }

    pub fn ingest(&mut self) -> Result<Vec<String>> {
        let ds = load_dataset(&self.cfg.data.path, &self.cfg.data.features)?;
        let matrix = encode(&ds)?;
        let template = build_edge_template(&matrix, self.cfg.data.corr_threshold)?;
        info!("ingest: {} states, {} features, {} template edges", matrix.n_states(), matrix.n_features(), template.pairs.len());
        let a = IngestArtifact { schema: ds.schema, matrix, template, dropped_rows: ds.dropped_rows };
        Ok(vec![self.save("ingest.json", &a)?])
    }

    pub fn cluster(&mut self) -> Result<Vec<String>> {
        let ia: IngestArtifact = self.load("ingest.json")?;
        let m = &ia.matrix;
        let graphs = build_state_graphs(m, &ia.template)?;
        let params = EncoderParams::new(
            2 * m.n_features(),
            self.cfg.embed.dim,
            self.cfg.embed.rounds,
            derive_seed(self.cfg.seed, "embed"),
        );
        let embeddings = encode_corpus(&graphs, &params)?;
        let c = &self.cfg.cluster;
        let ccfg = ClusterConfig {
            knn: c.knn,
            k_min: c.k_min,
            k_max: c.k_max,
            k_override: c.k,
            n_init: c.n_init,
            seed: derive_seed(self.cfg.seed, "cluster"),
        };
        let model = fit_clusters(&embeddings, &ccfg)?;
        let soft = embeddings.iter().map(|e| soft_assign(e.state_id, &e.graph_vector, &model)).collect();
        let sps = load_standard_phenotypes(&self.cfg.data.standard_phenotypes, &m.column_names)?;
        let mixtures = map_to_standard(&model, m, &sps, c.sp_temperature)?;
        info!("cluster: K = {}, sizes {:?}, silhouette {:.4}", model.k, model.sizes(), model.silhouette);
        let a = ClusterArtifact {
            params,
            embeddings: embeddings.into_iter().map(|e| e.graph_vector).collect(),
            model,
            soft,
            standard_phenotypes: sps,
            mixtures,
        };
        Ok(vec![self.save("cluster.json", &a)?])
    }

    pub fn causal(&mut self) -> Result<Vec<String>> {
        let ia: IngestArtifact = self.load("ingest.json")?;
        let ca: ClusterArtifact = self.load("cluster.json")?;
        let mut graphs = Vec::new();
        let mut phenotypes = Vec::new();
        for k in 0..ca.model.k {
            let x = cluster_rows(&ia.matrix, &ca.model.members[k]);
            let t = Instant::now();
            let cg = fit_structure(&x, k, &self.cfg.notears)?;
            info!("causal: cluster {k}: {} edges, h = {:.2e}, {:.1}s", cg.edges.len(), cg.h_final, t.elapsed().as_secs_f64());
            phenotypes.push(phenotype_state(&ca.model, &ia.matrix, &ca.mixtures[k], &ca.standard_phenotypes, &cg));
            graphs.push(cg);
        }
        Ok(vec![self.save("causal.json", &CausalArtifact { graphs, phenotypes })?])
    }

    pub fn bn(&mut self) -> Result<Vec<String>> {
        let ia: IngestArtifact = self.load("ingest.json")?;
        let ca: ClusterArtifact = self.load("cluster.json")?;
        let cz: CausalArtifact = self.load("causal.json")?;
        let m = &ia.matrix;
        let categorical: Vec<bool> = m.encoders.iter().map(|e| e.is_categorical()).collect();
        let mut a = BnArtifact { discretizations: Vec::new(), nets: Vec::new(), marginals: Vec::new() };
        for k in 0..ca.model.k {
            let x = cluster_rows(m, &ca.model.members[k]);
            let disc = Discretization::fit(&x, &m.column_names, &categorical, self.cfg.bn.bins);
            let net = fit_bn(&x, &cz.graphs[k], &disc)?;
            let marginals = (0..net.n_nodes()).map(|v| posterior(&net, &Query::marginal(v))).collect::<Result<_>>()?;
            a.discretizations.push(disc);
            a.nets.push(net);
            a.marginals.push(marginals);
        }
        Ok(vec![self.save("bn.json", &a)?])
    }

    pub fn hypothesize(&mut self) -> Result<Vec<String>> {
        let ia: IngestArtifact = self.load("ingest.json")?;
        let cz: CausalArtifact = self.load("causal.json")?;
        let ba: BnArtifact = self.load("bn.json")?;
        let hcfg = HypothesisConfig { max_hypotheses: self.cfg.hypothesis.max_hypotheses, weights: self.cfg.nps_weights() };
        let backends = self.backends()?;
        let remote = backends.hypothesis_backend();
        let all: Vec<&CausalGraph> = cz.graphs.iter().collect();
        let mut hypotheses = Vec::new();
        for (k, ps) in cz.phenotypes.iter().enumerate() {
            let ctx = PhenotypeContext { ps, cg: &cz.graphs[k], bn: &ba.nets[k], all_graphs: &all, names: &ia.matrix.column_names };
            let hs = generate_hypotheses(&ctx, &hcfg, remote.as_ref().map(|r| r as &dyn HypothesisBackend))?;
            info!("hypothesize: cluster {k}: {} hypotheses", hs.len());
            hypotheses.extend(hs);
        }
        Ok(vec![self.save("hypotheses.json", &HypothesesArtifact { hypotheses })?])
    }

    pub fn retrieve(&mut self) -> Result<Vec<String>> {
        let ha: HypothesesArtifact = self.load("hypotheses.json")?;
        let limit = self.cfg.evidence.retrieval_limit;
        let w = self.cfg.evidence.weights.clone();
        let backends = self.backends()?;
        let retrievals = ha
            .hypotheses
            .iter()
            .map(|r| retrieve(&r.hypothesis, backends.literature.as_ref(), limit, &w))
            .collect::<Result<Vec<_>>>()?;
        Ok(vec![self.save("retrievals.json", &RetrievalArtifact { retrievals })?])
    }

    pub fn score(&mut self) -> Result<Vec<String>> {
        let ia: IngestArtifact = self.load("ingest.json")?;
        let cz: CausalArtifact = self.load("causal.json")?;
        let ba: BnArtifact = self.load("bn.json")?;
        let ha: HypothesesArtifact = self.load("hypotheses.json")?;
        let ra: RetrievalArtifact = self.load("retrievals.json")?;
        let names = &ia.matrix.column_names;
        let aliases = load_aliases(self.cfg.data.aliases.as_deref())?;
        let linker = EntityLinker::new(names, &aliases);
        let w = self.cfg.evidence.weights.clone();
        let nps_w = self.cfg.nps_weights();
        let backends = self.backends()?;
        let by_id: BTreeMap<&str, &Retrieval> = ra.retrievals.iter().map(|r| (r.hypothesis_id.as_str(), r)).collect();
        let mut out = ScoreArtifact { nps: BTreeMap::new(), claims: Vec::new(), dropped: Vec::new() };
        for rh in &ha.hypotheses {
            let h = &rh.hypothesis;
            let r = by_id.get(h.id.as_str()).ok_or_else(|| Error::MissingArtifact(format!("retrieval for {}", h.id).into()))?;
            let k = h.cluster_id;
            let breakdown = final_nps(rh, r.lit_support, &nps_w);
            let ctx = ScoringContext { ps: &cz.phenotypes[k], cg: &cz.graphs[k], bn: &ba.nets[k], names, linker: &linker, weights: &w };
            let (claims, dropped) = score_retrieval(&ctx, r, breakdown.nps, h.exploratory, backends.claims.as_ref())?;
            out.claims.extend(claims);
            out.dropped.extend(dropped);
            out.nps.insert(h.id.clone(), breakdown);
        }
        info!("score: {} claims, {} dropped", out.claims.len(), out.dropped.len());
        Ok(vec![self.save("claims.json", &out)?])
    }

    pub fn expand(&mut self) -> Result<Vec<String>> {
        let ia: IngestArtifact = self.load("ingest.json")?;
        let ca: ClusterArtifact = self.load("cluster.json")?;
        let cz: CausalArtifact = self.load("causal.json")?;
        let ha: HypothesesArtifact = self.load("hypotheses.json")?;
        let ra: RetrievalArtifact = self.load("retrievals.json")?;
        let sa: ScoreArtifact = self.load("claims.json")?;
        let names = &ia.matrix.column_names;
        let sp_names = ca.sp_names();

        let mut g = KnowledgeGraph::new();
        g.add_features(names);
        g.add_standard_phenotypes(&sp_names);
        let sizes = ca.model.sizes();
        for (k, ps) in cz.phenotypes.iter().enumerate() {
            g.add_phenotype(ps, &ca.mixtures[k], &sp_names, sizes[k])?;
            g.add_causal_graph(&cz.graphs[k], names, false)?;
        }
        for rh in &ha.hypotheses {
            let nps = sa.nps.get(&rh.hypothesis.id).unwrap_or(&rh.preliminary);
            g.add_hypothesis(&rh.hypothesis, nps)?;
        }
        g.commit();
        let front = pareto_front(sa.claims);
        let report = expand(&mut g, &front, &ra.retrievals, &self.cfg.evidence.weights)?;
        info!("expand: +{} claims, +{} documents, version {}", report.claims_added, report.documents_added, report.version);

        let kg = self.out().join(KG_DIR);
        if kg.exists() {
            fs::remove_dir_all(&kg).map_err(|e| Error::io(&kg, e))?;
        }
        persist(&mut g, &kg)?;
        let gml = kg.join("graph.graphml");
        fs::write(&gml, graphml(&g)).map_err(|e| Error::io(&gml, e))?;
        Ok(vec![
            self.save("front.json", &front)?,
            self.save("expansion.json", &report)?,
            format!("{KG_DIR}/graph.jsonl"),
            format!("{KG_DIR}/changes.jsonl"),
            format!("{KG_DIR}/graph.graphml"),
        ])
    }

    pub fn report(&mut self) -> Result<Vec<String>> {
        write_report(self.out(), &self.cfg)
    }

    fn dispatch(&mut self, stage: Stage) -> Result<Vec<String>> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Cluster => self.cluster(),
            Stage::Causal => self.causal(),
            Stage::Bn => self.bn(),
            Stage::Hypothesize => self.hypothesize(),
            Stage::Retrieve => self.retrieve(),
            Stage::Score => self.score(),
            Stage::Expand => self.expand(),
            Stage::Report => self.report(),
        }
    }

    /// Runs one stage and records it in the manifest. Failures are tagged
    /// with the stage name; earlier artifacts stay in place for `--resume`.
    pub fn run_stage(&mut self, stage: Stage, manifest: &mut RunManifest) -> Result<()> {
        let t = Instant::now();
        let rels = self.dispatch(stage).map_err(|e| Error::stage(stage.name(), e))?;
        let artifacts = rels.iter().map(|r| entry(self.out(), r)).collect::<Result<Vec<_>>>()?;
        let seconds = t.elapsed().as_secs_f64();
        info!("stage {} done in {seconds:.2}s", stage.name());
        manifest.upsert(StageRecord { stage, seconds, artifacts });
        manifest.save(self.out())
    }

    /// Loads the manifest for this output directory if it belongs to the
    /// same config and inputs, otherwise starts a fresh one.
    pub fn manifest(&self) -> Result<RunManifest> {
        let fresh = RunManifest::new(&self.cfg)?;
        Ok(match RunManifest::load(self.out()) {
            Ok(m) if m.config_hash == fresh.config_hash && m.inputs == fresh.inputs => m,
            _ => fresh,
        })
    }

    /// All stages in order. With `resume`, stages whose recorded artifacts
    /// still verify are skipped up to the first one that does not.
    pub fn run(&mut self, resume: bool) -> Result<RunManifest> {
        fs::create_dir_all(self.out()).map_err(|e| Error::io(self.out(), e))?;
        let mut manifest = if resume { self.manifest()? } else { RunManifest::new(&self.cfg)? };
        let mut skipping = resume;
        for stage in Stage::ALL {
            if skipping && manifest.verify_stage(self.out(), stage) {
                info!("stage {} up to date; skipped", stage.name());
                continue;
            }
            skipping = false;
            self.run_stage(stage, &mut manifest)?;
        }
        Ok(manifest)
    }
}

/// Validates the config, then executes every stage.
pub fn run_pipeline(cfg: PipelineConfig, resume: bool) -> Result<RunManifest> {
    cfg.validate()?;
    Pipeline::new(cfg).run(resume)
}
