//! Pipeline configuration file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::NotearsConfig;
use crate::embed::{DEFAULT_DIM, DEFAULT_ROUNDS};
use crate::evidence::wire::HttpConfig;
use crate::evidence::ScoreWeights;
use crate::hypothesis::{NpsWeights, DEFAULT_MAX_HYPOTHESES};
use crate::ingest::{FeatureDef, DEFAULT_CORR_THRESHOLD};
use crate::online::OnlineConfig;
use crate::phenotype::{StandardPhenotypeDef, DEFAULT_SP_TEMPERATURE};
use crate::probnet::DEFAULT_BINS;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub features: Vec<FeatureDef>,
    /// TOML file with `[[standard_phenotype]]` tables.
    pub standard_phenotypes: PathBuf,
    /// TOML map from feature name to alternative surface forms.
    pub aliases: Option<PathBuf>,
    pub corr_threshold: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            features: Vec::new(),
            standard_phenotypes: PathBuf::new(),
            aliases: None,
            corr_threshold: DEFAULT_CORR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub dim: usize,
    pub rounds: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, rounds: DEFAULT_ROUNDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub knn: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub k: Option<usize>,
    pub n_init: usize,
    pub sp_temperature: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self { knn: 15, k_min: 2, k_max: 10, k: None, n_init: 10, sp_temperature: DEFAULT_SP_TEMPERATURE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnSection {
    pub bins: usize,
}

impl Default for BnSection {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSource {
    Template,
    /// Ask the hypotheses service; fall back to templates if it fails.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisSection {
    pub max_hypotheses: usize,
    pub theta: [f64; 6],
    pub source: HypothesisSource,
}

impl Default for HypothesisSection {
    fn default() -> Self {
        Self {
            max_hypotheses: DEFAULT_MAX_HYPOTHESES,
            theta: NpsWeights::default().theta,
            source: HypothesisSource::Template,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceSection {
    /// Documents fetched per hypothesis.
    pub retrieval_limit: usize,
    #[serde(flatten)]
    pub weights: ScoreWeights,
}

impl Default for EvidenceSection {
    fn default() -> Self {
        Self { retrieval_limit: 10, weights: ScoreWeights::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    /// Replay stored responses; a missing one fails the stage.
    Fixtures,
    /// Search a local JSON-lines corpus and extract claims with the rule
    /// extractor.
    Corpus,
    /// Live E-utilities and, when configured, remote claim and hypothesis
    /// services.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub fixtures: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Store every response here (in fixture layout) and reuse stored ones.
    pub record: Option<PathBuf>,
    pub http: HttpConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { mode: BackendMode::Fixtures, fixtures: None, corpus: None, record: None, http: HttpConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub embed: EmbedConfig,
    pub cluster: ClusterSection,
    pub notears: NotearsConfig,
    pub bn: BnSection,
    pub hypothesis: HypothesisSection,
    pub evidence: EvidenceSection,
    pub backend: BackendConfig,
    pub online: OnlineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            data: DataConfig::default(),
            embed: EmbedConfig::default(),
            cluster: ClusterSection::default(),
            notears: NotearsConfig::default(),
            bn: BnSection::default(),
            hypothesis: HypothesisSection::default(),
            evidence: EvidenceSection::default(),
            backend: BackendConfig::default(),
            online: OnlineConfig::default(),
        }
    }
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::Config { key, reason } => Error::Config { key: format!("{section}.{key}"), reason },
        other => other,
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses a TOML config. Relative paths are taken relative to the
    /// file's directory. The result is validated.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "<file>".into());
            Error::config(key, e.message().to_string())
        })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output);
        resolve(base, &mut self.data.path);
        resolve(base, &mut self.data.standard_phenotypes);
        for p in [&mut self.data.aliases, &mut self.backend.fixtures, &mut self.backend.corpus, &mut self.backend.record]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
    }

    /// Checks every weight group, threshold, and required path before any
    /// work starts.
    pub fn validate(&self) -> Result<()> {
        if self.data.features.is_empty() {
            return Err(Error::config("data.features", "at least one feature must be declared"));
        }
        if !(0.0..=1.0).contains(&self.data.corr_threshold) {
            return Err(Error::config("data.corr_threshold", "must lie in [0, 1]"));
        }
        for (key, p) in [("data.path", &self.data.path), ("data.standard_phenotypes", &self.data.standard_phenotypes)] {
            if !p.is_file() {
                return Err(Error::config(key, format!("file `{}` does not exist", p.display())));
            }
        }
        if let Some(p) = &self.data.aliases {
            if !p.is_file() {
                return Err(Error::config("data.aliases", format!("file `{}` does not exist", p.display())));
            }
        }
        if self.embed.dim == 0 || self.embed.rounds == 0 {
            return Err(Error::config("embed", "dim and rounds must be positive"));
        }
        let c = &self.cluster;
        if c.k_min < 2 || c.k_max < c.k_min {
            return Err(Error::config("cluster.k_min", "need 2 <= k_min <= k_max"));
        }
        if c.k.is_some_and(|k| k < 1) || c.knn == 0 || c.n_init == 0 {
            return Err(Error::config("cluster", "k, knn and n_init must be positive"));
        }
        if !(c.sp_temperature > 0.0) {
            return Err(Error::config("cluster.sp_temperature", "must be positive"));
        }
        self.notears.validate()?;
        if self.bn.bins < 2 {
            return Err(Error::config("bn.bins", "need at least 2 bins"));
        }
        NpsWeights { theta: self.hypothesis.theta }.validate().map_err(|e| prefixed("hypothesis", e))?;
        if self.hypothesis.max_hypotheses == 0 {
            return Err(Error::config("hypothesis.max_hypotheses", "must be positive"));
        }
        self.evidence.weights.validate().map_err(|e| prefixed("evidence", e))?;
        if self.evidence.retrieval_limit == 0 {
            return Err(Error::config("evidence.retrieval_limit", "must be positive"));
        }
        self.online.validate()?;
        match self.backend.mode {
            BackendMode::Fixtures if self.backend.fixtures.is_none() => {
                return Err(Error::config("backend.fixtures", "fixture mode needs a fixture directory"));
            }
            BackendMode::Corpus if self.backend.corpus.as_ref().is_none_or(|p| !p.is_file()) => {
                return Err(Error::config("backend.corpus", "corpus mode needs an existing corpus file"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn nps_weights(&self) -> NpsWeights {
        NpsWeights { theta: self.hypothesis.theta }
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpFile {
    standard_phenotype: Vec<SpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpEntry {
    name: String,
    weights: BTreeMap<String, f64>,
}

/// Reads standard phenotype definitions and resolves them against the
/// encoded columns.
pub fn load_standard_phenotypes(path: &Path, columns: &[String]) -> Result<Vec<StandardPhenotypeDef>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SpFile =
        toml::from_str(&text).map_err(|e| Error::config("data.standard_phenotypes", e.message().to_string()))?;
    file.standard_phenotype
        .iter()
        .map(|sp| StandardPhenotypeDef::from_named_weights(&sp.name, &sp.weights, columns))
        .collect()
}

pub fn render_standard_phenotypes(defs: &[(String, BTreeMap<String, f64>)]) -> String {
    let file = SpFile {
        standard_phenotype: defs.iter().map(|(name, weights)| SpEntry { name: name.clone(), weights: weights.clone() }).collect(),
    };
    toml::to_string(&file).expect("definitions serialize")
}

pub fn load_aliases(path: Option<&Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config("data.aliases", e.message().to_string()))
}
