//! Tabular ingestion: schema-checked CSV loading, label encoding,
//! standardization and per-state feature graphs.
//!
//! Every state becomes a small graph whose nodes are the retained features.
//! Edges come from one global Spearman-correlation template, so all state
//! graphs share topology and differ only in node values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    /// Carried through as metadata; never enters the numeric pipeline.
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl FeatureDef {
    pub fn numeric(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Numeric, unit: None }
    }

    pub fn categorical(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Categorical, unit: None }
    }

    pub fn text(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Text, unit: None }
    }
}

/// One row, values in schema order.
pub type RawRecord = Vec<String>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Vec<FeatureDef>,
    pub records: Vec<RawRecord>,
    /// Rows removed because a retained feature was missing.
    pub dropped_rows: usize,
}

fn is_missing(v: &str) -> bool {
    let t = v.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn validate_schema(schema: &[FeatureDef]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for def in schema {
        if !seen.insert(def.name.as_str()) {
            return Err(Error::InvalidSchema(format!("duplicate feature `{}`", def.name)));
        }
    }
    let usable = schema.iter().filter(|d| d.kind != FeatureKind::Text).count();
    if usable < 2 {
        return Err(Error::InvalidSchema(format!(
            "need at least 2 numeric or categorical features, found {usable}"
        )));
    }
    Ok(())
}

impl Dataset {
    /// Builds a dataset from in-memory rows, applying the same validation
    /// and missing-value policy as [`load_dataset`].
    pub fn from_rows(schema: Vec<FeatureDef>, rows: Vec<RawRecord>) -> Result<Self> {
        validate_schema(&schema)?;
        let mut records = Vec::with_capacity(rows.len());
        let mut dropped_rows = 0;
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::DimensionMismatch { expected: schema.len(), got: row.len() });
            }
            let mut missing = false;
            for (def, value) in schema.iter().zip(&row) {
                if def.kind == FeatureKind::Text {
                    continue;
                }
                if is_missing(value) {
                    missing = true;
                    continue;
                }
                if def.kind == FeatureKind::Numeric && value.trim().parse::<f64>().is_err() {
                    return Err(Error::TypeMismatch {
                        row: r,
                        col: def.name.clone(),
                        value: value.clone(),
                    });
                }
            }
            if missing {
                dropped_rows += 1;
            } else {
                records.push(row);
            }
        }
        if dropped_rows > 0 {
            warn!("dropped {dropped_rows} rows with missing values");
        }
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { schema, records, dropped_rows })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|d| d.name == name)
    }
}

/// Loads a comma-separated file with a header row and checks it against
/// `schema`. Extra columns in the file are ignored.
pub fn load_dataset(path: &Path, schema: &[FeatureDef]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => Error::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.len());
    for def in schema {
        let pos = headers
            .iter()
            .position(|h| h == def.name)
            .ok_or_else(|| Error::MissingColumn(def.name.clone()))?;
        positions.push(pos);
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(positions.iter().map(|&p| record.get(p).unwrap_or("").to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::from_rows(schema.to_vec(), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueCodec {
    Numeric,
    /// Levels in lexicographic order; the code of a level is its index.
    Categorical { levels: Vec<String> },
}

/// Encoding and standardization parameters of one retained column, kept so
/// that online states are transformed exactly like training states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoder {
    pub name: String,
    /// Position of the column in the dataset schema.
    pub source_index: usize,
    pub codec: ValueCodec,
    pub mean: f64,
    pub sd: f64,
}

impl ColumnEncoder {
    pub fn raw_value(&self, value: &str) -> Option<f64> {
        match &self.codec {
            ValueCodec::Numeric => value.trim().parse().ok(),
            ValueCodec::Categorical { levels } => levels
                .binary_search_by(|l| l.as_str().cmp(value.trim()))
                .ok()
                .map(|i| i as f64),
        }
    }

    pub fn standardize(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }

    pub fn decode(&self, code: usize) -> Option<&str> {
        match &self.codec {
            ValueCodec::Categorical { levels } => levels.get(code).map(String::as_str),
            ValueCodec::Numeric => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.codec, ValueCodec::Categorical { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedMatrix {
    /// n × f, standardized per column.
    pub values: DMatrix<f64>,
    pub encoders: Vec<ColumnEncoder>,
    pub column_names: Vec<String>,
    /// Constant columns removed during encoding.
    pub dropped_columns: Vec<String>,
}

impl EncodedMatrix {
    pub fn n_states(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Encodes one raw record (schema order) with the stored encoders.
    /// Unknown categorical levels are an error.
    pub fn encode_record(&self, record: &[String]) -> Result<Vec<f64>> {
        encode_record_with(&self.encoders, record)
    }
}

pub fn encode_record_with(encoders: &[ColumnEncoder], record: &[String]) -> Result<Vec<f64>> {
    encoders
        .iter()
        .map(|enc| {
            let value = record.get(enc.source_index).ok_or(Error::DimensionMismatch {
                expected: enc.source_index + 1,
                got: record.len(),
            })?;
            enc.raw_value(value)
                .map(|raw| enc.standardize(raw))
                .ok_or_else(|| Error::TypeMismatch { row: 0, col: enc.name.clone(), value: value.clone() })
        })
        .collect()
}

/// Label-encodes categoricals and standardizes every retained column.
pub fn encode(ds: &Dataset) -> Result<EncodedMatrix> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut encoders = Vec::new();
    let mut columns = Vec::new();
    let mut dropped_columns = Vec::new();
    for (idx, def) in ds.schema.iter().enumerate() {
        let (codec, raw): (ValueCodec, Vec<f64>) = match def.kind {
            FeatureKind::Text => continue,
            FeatureKind::Numeric => (
                ValueCodec::Numeric,
                ds.records.iter().map(|r| r[idx].trim().parse().unwrap_or(f64::NAN)).collect(),
            ),
            FeatureKind::Categorical => {
                let levels: Vec<String> = ds
                    .records
                    .iter()
                    .map(|r| r[idx].trim().to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let lookup: HashMap<&str, usize> =
                    levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                let raw = ds.records.iter().map(|r| lookup[r[idx].trim()] as f64).collect();
                (ValueCodec::Categorical { levels }, raw)
            }
        };
        let mean = linalg::mean(&raw);
        let sd = linalg::std_dev(&raw);
        if sd == 0.0 || !sd.is_finite() {
            warn!("column `{}` is constant and was dropped", def.name);
            dropped_columns.push(def.name.clone());
            continue;
        }
        columns.push(raw.iter().map(|x| (x - mean) / sd).collect::<Vec<_>>());
        encoders.push(ColumnEncoder { name: def.name.clone(), source_index: idx, codec, mean, sd });
    }
    if encoders.len() < 2 {
        return Err(Error::InvalidSchema(format!(
            "only {} non-constant features remain after encoding",
            encoders.len()
        )));
    }
    let n = ds.len();
    let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let column_names = encoders.iter().map(|e| e.name.clone()).collect();
    Ok(EncodedMatrix { values, encoders, column_names, dropped_columns })
}

/// Undirected weighted feature pairs shared by every state graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTemplate {
    pub n_features: usize,
    /// `(i, ii, |rho|)` with `i < ii`.
    pub pairs: Vec<(usize, usize, f64)>,
    /// True when no pair passed the threshold and a chain was used instead.
    pub fallback: bool,
}

impl EdgeTemplate {
    pub fn chain(n_features: usize) -> Self {
        let pairs = (1..n_features).map(|i| (i - 1, i, 1.0)).collect();
        Self { n_features, pairs, fallback: true }
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_features, self.n_features);
        for &(i, ii, w) in &self.pairs {
            a[(i, ii)] = w;
            a[(ii, i)] = w;
        }
        a
    }
}

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.2;

pub fn build_edge_template(m: &EncodedMatrix, corr_threshold: f64) -> Result<EdgeTemplate> {
    let n = m.n_states();
    if n < 3 {
        return Err(Error::TooFewStates { needed: 3, got: n });
    }
    let f = m.n_features();
    let ranks: Vec<Vec<f64>> =
        (0..f).map(|j| linalg::average_ranks(&linalg::column(&m.values, j))).collect();
    let mut pairs = Vec::new();
    for i in 0..f {
        for ii in (i + 1)..f {
            let rho = linalg::pearson(&ranks[i], &ranks[ii]).abs().min(1.0);
            if rho >= corr_threshold {
                pairs.push((i, ii, rho));
            }
        }
    }
    if pairs.is_empty() {
        warn!("no feature pair reached |rho| >= {corr_threshold}; using chain template");
        return Ok(EdgeTemplate::chain(f));
    }
    Ok(EdgeTemplate { n_features: f, pairs, fallback: false })
}

/// `S_t = (X_t, E_t, V_t)` for one state.
///
/// Node `i` carries the feature vector `[x_i * e_i, e_i]` of width `2f`:
/// the standardized value sits in the feature's own slot, followed by the
/// one-hot feature identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGraph {
    pub state_id: usize,
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub node_features: DMatrix<f64>,
}

impl StateGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_width(&self) -> usize {
        self.node_features.ncols()
    }

    /// Standardized node values, recovered from the value block.
    pub fn values(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node_features[(i, i)]).collect()
    }
}

pub fn state_graph(
    state_id: usize,
    values: &[f64],
    names: &[String],
    template: &EdgeTemplate,
) -> StateGraph {
    let f = values.len();
    let mut v = DMatrix::zeros(f, 2 * f);
    for i in 0..f {
        v[(i, i)] = values[i];
        v[(i, f + i)] = 1.0;
    }
    StateGraph {
        state_id,
        nodes: names.to_vec(),
        edges: template.pairs.clone(),
        node_features: v,
    }
}

pub fn build_state_graphs(m: &EncodedMatrix, t: &EdgeTemplate) -> Result<Vec<StateGraph>> {
    if t.n_features != m.n_features() {
        return Err(Error::DimensionMismatch { expected: m.n_features(), got: t.n_features });
    }
    Ok((0..m.n_states())
        .map(|s| state_graph(s, &linalg::row(&m.values, s), &m.column_names, t))
        .collect())
}

/// Text-kind columns per record, keyed by column name. Used as node
/// metadata only.
pub fn text_metadata(ds: &Dataset) -> Vec<BTreeMap<String, String>> {
    let text_cols: Vec<(usize, &str)> = ds
        .schema
        .iter()
        .enumerate()
        .filter(|(_, d)| d.kind == FeatureKind::Text)
        .map(|(i, d)| (i, d.name.as_str()))
        .collect();
    ds.records
        .iter()
        .map(|r| text_cols.iter().map(|&(i, name)| (name.to_string(), r[i].clone())).collect())
        .collect()
}
