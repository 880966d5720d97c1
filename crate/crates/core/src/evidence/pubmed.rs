//! E-utilities search/fetch: request construction, response parsing, and a
//! local corpus that answers the same wire formats offline.

use std::path::Path;

use log::warn;
use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::wire::{Service, Transport, WireRequest};
use super::{Document, StudyType};
use crate::{Error, Result};

pub fn esearch_request(term: &str, retmax: usize) -> WireRequest {
    WireRequest::get(
        Service::Esearch,
        &[
            ("db", "pubmed".into()),
            ("term", term.into()),
            ("retmax", retmax.to_string()),
            ("retmode", "json".into()),
            ("sort", "relevance".into()),
        ],
    )
}

pub fn efetch_request(ids: &[String]) -> WireRequest {
    WireRequest::get(
        Service::Efetch,
        &[
            ("db", "pubmed".into()),
            ("id", ids.join(",")),
            ("rettype", "abstract".into()),
            ("retmode", "xml".into()),
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    /// Total hits for the query, which may exceed `ids.len()`.
    pub count: usize,
    pub ids: Vec<String>,
}

pub fn parse_esearch(body: &str) -> Result<SearchResult> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Parse(format!("esearch: {e}")))?;
    let r = v.get("esearchresult").ok_or_else(|| Error::Parse("esearch: no esearchresult".into()))?;
    if let Some(err) = r.get("ERROR") {
        return Err(Error::Parse(format!("esearch: {err}")));
    }
    let ids: Vec<String> = r
        .get("idlist")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("esearch: no idlist".into()))?
        .iter()
        .map(|x| x.as_str().map(str::to_string).ok_or_else(|| Error::Parse("esearch: non-string id".into())))
        .collect::<Result<_>>()?;
    let count = match r.get("count") {
        Some(Value::String(s)) => s.parse().map_err(|_| Error::Parse(format!("esearch: count `{s}`")))?,
        Some(Value::Number(n)) => n.as_u64().unwrap_or(0) as usize,
        _ => ids.len(),
    };
    Ok(SearchResult { count, ids })
}

#[derive(Debug, Default)]
struct Partial {
    pmid: Option<String>,
    title: String,
    abstract_parts: Vec<String>,
    year: Option<String>,
    medline_date: Option<String>,
    pub_types: Vec<String>,
}

impl Partial {
    fn finish(self) -> std::result::Result<Document, String> {
        let pmid = self.pmid.filter(|p| !p.trim().is_empty()).ok_or("missing PMID")?;
        let title = self.title.trim().to_string();
        let abstract_text = self.abstract_parts.join(" ").trim().to_string();
        if title.is_empty() && abstract_text.is_empty() {
            return Err(format!("{pmid}: no title or abstract"));
        }
        let year_text = self.year.or(self.medline_date).unwrap_or_default();
        let year: i32 = year_text
            .trim()
            .get(..4)
            .and_then(|y| y.parse().ok())
            .ok_or_else(|| format!("{pmid}: unparseable year `{year_text}`"))?;
        let study_type = StudyType::infer(&self.pub_types, &format!("{title} {abstract_text}"));
        Ok(Document::new(pmid.trim(), title, abstract_text, year, study_type))
    }
}

/// Parses a PubmedArticleSet. Records that lack an id, text, or a year are
/// skipped; the second value counts them.
pub fn parse_efetch(xml: &str) -> Result<(Vec<Document>, usize)> {
    let mut reader = Reader::from_str(xml);
    let mut path: Vec<String> = Vec::new();
    let mut current: Option<Partial> = None;
    let mut docs = Vec::new();
    let mut skipped = 0;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::Parse(format!("efetch xml at {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if name == "PubmedArticle" {
                    current = Some(Partial::default());
                }
                if name == "AbstractText" {
                    if let Some(p) = current.as_mut() {
                        p.abstract_parts.push(String::new());
                    }
                }
                path.push(name);
            }
            Event::End(_) => {
                if path.pop().as_deref() == Some("PubmedArticle") {
                    match current.take().map(Partial::finish) {
                        Some(Ok(d)) => docs.push(d),
                        Some(Err(reason)) => {
                            warn!("skipping malformed record: {reason}");
                            skipped += 1;
                        }
                        None => {}
                    }
                }
            }
            Event::Text(t) => {
                let text = t.decode().map_err(|e| Error::Parse(e.to_string()))?;
                append_text(&path, current.as_mut(), &text);
            }
            Event::CData(t) => {
                let text = t.decode().map_err(|e| Error::Parse(e.to_string()))?;
                append_text(&path, current.as_mut(), &text);
            }
            Event::GeneralRef(r) => {
                let text = if let Some(c) = r.resolve_char_ref().map_err(|e| Error::Parse(e.to_string()))? {
                    c.to_string()
                } else {
                    let name = r.decode().map_err(|e| Error::Parse(e.to_string()))?;
                    resolve_predefined_entity(&name).unwrap_or("").to_string()
                };
                append_text(&path, current.as_mut(), &text);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(Error::Parse("efetch xml truncated inside a record".into()));
    }
    Ok((docs, skipped))
}

fn append_text(path: &[String], current: Option<&mut Partial>, text: &str) {
    let Some(p) = current else { return };
    let within = |tag: &str| path.iter().any(|n| n == tag);
    let leaf = path.last().map(String::as_str);
    let parent = path.len().checked_sub(2).map(|i| path[i].as_str());
    if leaf == Some("PMID") && parent == Some("MedlineCitation") {
        p.pmid.get_or_insert_with(String::new).push_str(text);
    } else if within("ArticleTitle") {
        p.title.push_str(text);
    } else if within("AbstractText") {
        if let Some(last) = p.abstract_parts.last_mut() {
            last.push_str(text);
        }
    } else if within("PubDate") && leaf == Some("Year") {
        p.year.get_or_insert_with(String::new).push_str(text);
    } else if within("PubDate") && leaf == Some("MedlineDate") {
        p.medline_date.get_or_insert_with(String::new).push_str(text);
    } else if leaf == Some("PublicationType") {
        p.pub_types.push(text.to_string());
    }
}

/// One record of a local corpus file (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub pmid: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: i32,
    #[serde(default)]
    pub publication_types: Vec<String>,
}

pub fn render_esearch(term: &str, count: usize, ids: &[String]) -> String {
    let v = json!({
        "header": {"type": "esearch", "version": "0.3"},
        "esearchresult": {
            "count": count.to_string(),
            "retmax": ids.len().to_string(),
            "retstart": "0",
            "idlist": ids,
            "querytranslation": term,
        }
    });
    serde_json::to_string_pretty(&v).expect("json value serializes")
}

pub fn render_efetch(records: &[&CorpusRecord]) -> String {
    let mut s = String::from("<?xml version=\"1.0\" ?>\n<PubmedArticleSet>\n");
    for r in records {
        s.push_str("<PubmedArticle>\n  <MedlineCitation Status=\"MEDLINE\" Owner=\"NLM\">\n");
        s.push_str(&format!("    <PMID Version=\"1\">{}</PMID>\n", escape(r.pmid.as_str())));
        s.push_str("    <Article PubModel=\"Print\">\n      <Journal>\n        <JournalIssue CitedMedium=\"Internet\">\n");
        s.push_str(&format!("          <PubDate>\n            <Year>{}</Year>\n          </PubDate>\n", r.year));
        s.push_str("        </JournalIssue>\n      </Journal>\n");
        s.push_str(&format!("      <ArticleTitle>{}</ArticleTitle>\n", escape(r.title.as_str())));
        s.push_str(&format!(
            "      <Abstract>\n        <AbstractText>{}</AbstractText>\n      </Abstract>\n",
            escape(r.abstract_text.as_str())
        ));
        s.push_str("      <PublicationTypeList>\n");
        for t in &r.publication_types {
            s.push_str(&format!("        <PublicationType>{}</PublicationType>\n", escape(t.as_str())));
        }
        s.push_str("      </PublicationTypeList>\n    </Article>\n  </MedlineCitation>\n</PubmedArticle>\n");
    }
    s.push_str("</PubmedArticleSet>\n");
    s
}

/// Boolean query as a conjunction of disjunctions of phrases.
pub fn parse_query(term: &str) -> Vec<Vec<String>> {
    term.split(" AND ")
        .map(|conj| {
            conj.trim()
                .trim_start_matches('(')
                .trim_end_matches(')')
                .split(" OR ")
                .map(|p| p.trim().trim_matches('"').to_lowercase())
                .filter(|p| !p.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|c| !c.is_empty())
        .collect()
}

fn normalize(text: &str) -> String {
    let spaced: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    format!(" {} ", spaced.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Answers search and fetch requests from an in-memory corpus, rendering
/// responses in the E-utilities wire formats.
#[derive(Debug, Clone, Default)]
pub struct CorpusTransport {
    pub records: Vec<CorpusRecord>,
}

impl CorpusTransport {
    pub fn new(records: Vec<CorpusRecord>) -> Self {
        Self { records }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<CorpusRecord>, _>>()?;
        Ok(Self { records })
    }

    pub fn search(&self, term: &str) -> Vec<&CorpusRecord> {
        let query = parse_query(term);
        self.records
            .iter()
            .filter(|r| {
                let text = normalize(&format!("{} {}", r.title, r.abstract_text));
                query.iter().all(|alts| alts.iter().any(|p| text.contains(&normalize(p))))
            })
            .collect()
    }
}

fn param<'a>(req: &'a WireRequest, key: &str) -> Option<&'a str> {
    req.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

impl Transport for CorpusTransport {
    fn send(&self, req: &WireRequest) -> Result<String> {
        match req.service {
            Service::Esearch => {
                let term = param(req, "term").unwrap_or("");
                let retmax: usize = param(req, "retmax").and_then(|v| v.parse().ok()).unwrap_or(20);
                let hits = self.search(term);
                let ids: Vec<String> = hits.iter().take(retmax).map(|r| r.pmid.clone()).collect();
                Ok(render_esearch(term, hits.len(), &ids))
            }
            Service::Efetch => {
                let wanted: Vec<&str> = param(req, "id").unwrap_or("").split(',').collect();
                let found: Vec<&CorpusRecord> = wanted
                    .iter()
                    .filter_map(|id| self.records.iter().find(|r| r.pmid == *id))
                    .collect();
                Ok(render_efetch(&found))
            }
            other => Err(Error::BackendUnavailable(format!("corpus cannot answer {}", other.name()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" ?>
<PubmedArticleSet>
<PubmedArticle>
  <MedlineCitation Status="MEDLINE" Owner="NLM">
    <PMID Version="1">31234567</PMID>
    <Article PubModel="Print">
      <Journal><JournalIssue><PubDate><Year>2019</Year><Month>Mar</Month></PubDate></JournalIssue></Journal>
      <ArticleTitle>Sleep &amp; stress in <i>undergraduates</i>: a meta-analysis</ArticleTitle>
      <Abstract>
        <AbstractText Label="BACKGROUND">Short sleep is common.</AbstractText>
        <AbstractText Label="RESULTS">Stress worsens sleep quality.</AbstractText>
      </Abstract>
      <PublicationTypeList><PublicationType UI="D017418">Meta-Analysis</PublicationType></PublicationTypeList>
    </Article>
    <CommentsCorrectionsList><CommentsCorrections><PMID Version="1">999</PMID></CommentsCorrections></CommentsCorrectionsList>
  </MedlineCitation>
</PubmedArticle>
<PubmedArticle>
  <MedlineCitation><PMID Version="1">42</PMID>
    <Article><Journal><JournalIssue><PubDate><MedlineDate>2001 Jan-Feb</MedlineDate></PubDate></JournalIssue></Journal>
    <ArticleTitle>Old cohort</ArticleTitle></Article>
  </MedlineCitation>
</PubmedArticle>
<PubmedArticle>
  <MedlineCitation><Article><ArticleTitle>No identifier</ArticleTitle></Article></MedlineCitation>
</PubmedArticle>
</PubmedArticleSet>"#;

    #[test]
    fn parses_records_and_skips_malformed() {
        let (docs, skipped) = parse_efetch(SAMPLE).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(docs.len(), 2);
        let d = &docs[0];
        assert_eq!(d.doc_id, "31234567");
        assert_eq!(d.title, "Sleep & stress in undergraduates: a meta-analysis");
        assert_eq!(d.abstract_text, "Short sleep is common. Stress worsens sleep quality.");
        assert_eq!(d.year, 2019);
        assert_eq!(d.study_type, StudyType::MetaAnalysis);
        assert_eq!(docs[1].year, 2001);
        assert_eq!(docs[1].study_type, StudyType::Cohort);
    }

    #[test]
    fn truncated_xml_is_an_error() {
        let cut = &SAMPLE[..SAMPLE.len() / 2];
        assert!(parse_efetch(cut).is_err());
    }

    #[test]
    fn esearch_parsing() {
        let body = r#"{"header":{},"esearchresult":{"count":"12","retmax":"2","idlist":["1","2"]}}"#;
        assert_eq!(parse_esearch(body).unwrap(), SearchResult { count: 12, ids: vec!["1".into(), "2".into()] });
        assert!(parse_esearch(r#"{"esearchresult":{"ERROR":"bad"}}"#).is_err());
        assert!(parse_esearch("not json").is_err());
    }

    fn record(pmid: &str, title: &str) -> CorpusRecord {
        CorpusRecord {
            pmid: pmid.into(),
            title: title.into(),
            abstract_text: "Among students with anxiety.".into(),
            year: 2020,
            publication_types: vec!["Randomized Controlled Trial".into()],
        }
    }

    #[test]
    fn corpus_round_trips_wire_formats() {
        let corpus = CorpusTransport::new(vec![
            record("1", "Sleep duration and stress level"),
            record("2", "Caffeine <and> mood"),
        ]);
        let term = "\"sleep duration\" AND \"stress level\" AND (anxiety)";
        let found = parse_esearch(&corpus.send(&esearch_request(term, 10)).unwrap()).unwrap();
        assert_eq!(found.ids, vec!["1".to_string()]);
        let (docs, skipped) = parse_efetch(&corpus.send(&efetch_request(&["2".into(), "1".into()])).unwrap()).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(docs[0].title, "Caffeine <and> mood");
        assert_eq!(docs[1].study_type, StudyType::Rct);
    }

    #[test]
    fn query_parsing() {
        assert_eq!(
            parse_query("\"a b\" AND (c OR d)"),
            vec![vec!["a b".to_string()], vec!["c".to_string(), "d".to_string()]]
        );
    }
}
