//! Line-delimited graph snapshots and the append-only change log.
//!
//! `graph.jsonl`: a header line, one line per node, one per edge, then a
//! trailer `{"checksum": <sha256 of every preceding byte>}`.
//! `changes.jsonl`: one [`Change`] per line, never rewritten.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Change, Edge, KnowledgeGraph, Node};
use crate::{Error, Result};

pub const SNAPSHOT_FILE: &str = "graph.jsonl";
pub const CHANGELOG_FILE: &str = "changes.jsonl";
const FORMAT: &str = "phenokg-graph";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    graph_version: u64,
    nodes: usize,
    edges: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Record {
    Node(Node),
    Edge(Edge),
}

#[derive(Debug, Serialize, Deserialize)]
struct Trailer {
    checksum: String,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptFile { path: path.to_path_buf(), reason: reason.into() }
}

fn last_logged_version(path: &Path) -> Result<u64> {
    if !path.exists() {
        return Ok(0);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut last = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: Change = serde_json::from_str(line).map_err(|e| corrupt(path, format!("line {}: {e}", i + 1)))?;
        if c.version < last {
            return Err(corrupt(path, format!("line {}: version decreases", i + 1)));
        }
        last = c.version;
    }
    Ok(last)
}

/// Writes the snapshot (atomically, via a temporary file) and appends the
/// changes committed since the last persist to the change log.
pub fn persist(g: &mut KnowledgeGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    g.commit();
    let log_path = dir.join(CHANGELOG_FILE);
    let logged = last_logged_version(&log_path)?;
    let unsaved = g.take_unsaved();
    let expected = unsaved.first().map_or(g.version, |c| c.version - 1);
    if logged != expected {
        g.unsaved = unsaved;
        return Err(Error::VersionSkew { snapshot: g.version, log: logged });
    }

    let mut body = String::new();
    let header = Header {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        graph_version: g.version,
        nodes: g.nodes.len(),
        edges: g.edges.len(),
    };
    body.push_str(&serde_json::to_string(&header)?);
    body.push('\n');
    for n in g.nodes.values() {
        body.push_str(&serde_json::to_string(&Record::Node(n.clone()))?);
        body.push('\n');
    }
    for e in g.edges.values() {
        body.push_str(&serde_json::to_string(&Record::Edge(e.clone()))?);
        body.push('\n');
    }
    let checksum = hex::encode(Sha256::digest(body.as_bytes()));
    body.push_str(&serde_json::to_string(&Trailer { checksum })?);
    body.push('\n');

    let snap = dir.join(SNAPSHOT_FILE);
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &snap).map_err(|e| Error::io(&snap, e))?;

    if !unsaved.is_empty() {
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let mut lines = String::new();
        for c in &unsaved {
            lines.push_str(&serde_json::to_string(c)?);
            lines.push('\n');
        }
        log.write_all(lines.as_bytes()).map_err(|e| Error::io(&log_path, e))?;
    }
    Ok(())
}

/// Reads a snapshot, verifying its checksum, record counts, and agreement
/// with the change log when one is present.
pub fn load(dir: &Path) -> Result<KnowledgeGraph> {
    let snap = dir.join(SNAPSHOT_FILE);
    let text = fs::read_to_string(&snap).map_err(|e| Error::io(&snap, e))?;
    let body_end = text.trim_end_matches('\n').rfind('\n').map(|i| i + 1).ok_or_else(|| corrupt(&snap, "no trailer"))?;
    let (body, trailer) = text.split_at(body_end);
    let trailer: Trailer =
        serde_json::from_str(trailer.trim()).map_err(|_| corrupt(&snap, "missing or unreadable checksum trailer"))?;
    if hex::encode(Sha256::digest(body.as_bytes())) != trailer.checksum {
        return Err(corrupt(&snap, "checksum mismatch"));
    }
    let mut lines = body.lines();
    let header: Header = serde_json::from_str(lines.next().ok_or_else(|| corrupt(&snap, "empty file"))?)
        .map_err(|e| corrupt(&snap, format!("header: {e}")))?;
    if header.format != FORMAT || header.format_version != FORMAT_VERSION {
        return Err(corrupt(&snap, format!("unsupported format {} v{}", header.format, header.format_version)));
    }
    let mut g = KnowledgeGraph { version: header.graph_version, ..Default::default() };
    for (i, line) in lines.enumerate() {
        match serde_json::from_str(line).map_err(|e| corrupt(&snap, format!("record {}: {e}", i + 1)))? {
            Record::Node(n) => {
                if g.nodes.insert(n.id.clone(), n).is_some() {
                    return Err(corrupt(&snap, format!("record {}: duplicate node", i + 1)));
                }
            }
            Record::Edge(e) => {
                if !g.nodes.contains_key(&e.from) || !g.nodes.contains_key(&e.to) {
                    return Err(corrupt(&snap, format!("record {}: edge before its endpoints", i + 1)));
                }
                g.edges.insert(e.key(), e);
            }
        }
    }
    if g.nodes.len() != header.nodes || g.edges.len() != header.edges {
        return Err(corrupt(&snap, "record counts disagree with header"));
    }
    let log_path = dir.join(CHANGELOG_FILE);
    if log_path.exists() {
        let logged = last_logged_version(&log_path)?;
        if logged != g.version {
            return Err(Error::VersionSkew { snapshot: g.version, log: logged });
        }
    }
    Ok(g)
}

fn xml_escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// GraphML rendering for visualization tools. Attribute maps are carried
/// as JSON text in an `attrs` key.
pub fn graphml(g: &KnowledgeGraph) -> String {
    let mut s = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
         \x20 <key id=\"kind\" for=\"all\" attr.name=\"kind\" attr.type=\"string\"/>\n\
         \x20 <key id=\"exploratory\" for=\"all\" attr.name=\"exploratory\" attr.type=\"boolean\"/>\n\
         \x20 <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n\
         \x20 <key id=\"attrs\" for=\"all\" attr.name=\"attrs\" attr.type=\"string\"/>\n",
    );
    s.push_str(&format!("  <graph id=\"G\" edgedefault=\"directed\">\n"));
    for n in g.nodes.values() {
        s.push_str(&format!(
            "    <node id=\"{}\"><data key=\"kind\">{}</data><data key=\"exploratory\">{}</data><data key=\"attrs\">{}</data></node>\n",
            xml_escape(&n.id),
            n.kind.label(),
            n.exploratory,
            xml_escape(&serde_json::to_string(&n.attrs).unwrap_or_default())
        ));
    }
    for (i, e) in g.edges.values().enumerate() {
        let weight = e
            .attrs
            .get("weight")
            .and_then(serde_json::Value::as_f64)
            .map(|w| format!("<data key=\"weight\">{w}</data>"))
            .unwrap_or_default();
        s.push_str(&format!(
            "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\"><data key=\"kind\">{}</data><data key=\"exploratory\">{}</data>{weight}<data key=\"attrs\">{}</data></edge>\n",
            xml_escape(&e.from),
            xml_escape(&e.to),
            e.kind.label(),
            e.exploratory,
            xml_escape(&serde_json::to_string(&e.attrs).unwrap_or_default())
        ));
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}
