use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    // ingest
    #[error("column `{0}` is declared in the schema but missing from the file")]
    MissingColumn(String),
    #[error("row {row}, column `{col}`: value `{value}` is not numeric")]
    TypeMismatch { row: usize, col: String, value: String },
    #[error("dataset has no usable rows")]
    EmptyDataset,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    // embed / linear algebra
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    // phenotype
    #[error("need at least {needed} states to cluster, got {got}")]
    TooFewStates { needed: usize, got: usize },
    #[error("standard phenotype `{0}` has an all-zero signature")]
    ZeroSignature(String),

    // causal
    #[error("column {0} is constant; cannot fit structure")]
    DegenerateInput(usize),

    // probnet
    #[error("evidence has zero probability under the network")]
    InconsistentEvidence,
    #[error("query target {0} also appears in the evidence")]
    TargetInEvidence(usize),

    // backends
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("fixture not found for request {key} in {dir}")]
    FixtureMissing { key: String, dir: PathBuf },

    // online
    #[error("zero vector in cosine similarity")]
    ZeroVector,

    // knowledge graph
    #[error("claim `{claim}` references hypothesis `{hypothesis}` absent from the graph")]
    DanglingReference { claim: String, hypothesis: String },
    #[error("corrupt graph file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("edge endpoint `{0}` is not a node of the graph")]
    MissingNode(String),
    #[error("version skew: snapshot at v{snapshot}, change log at v{log}")]
    VersionSkew { snapshot: u64, log: u64 },

    // pipeline
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }

    pub fn stage(stage: &str, source: Error) -> Self {
        match source {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage: stage.to_string(), source: Box::new(e) },
        }
    }

    /// Bad configuration or input data, as opposed to a failure while
    /// computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config { .. }
            | Error::MissingColumn(_)
            | Error::TypeMismatch { .. }
            | Error::EmptyDataset
            | Error::InvalidSchema(_)
            | Error::ZeroSignature(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Process exit status: 1 for validation failures, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        if self.is_validation() { 1 } else { 2 }
    }
}
