//! Run report: CSV tables and small SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    read_json, BnArtifact, CausalArtifact, ClusterArtifact, HypothesesArtifact, IngestArtifact, PipelineConfig,
    RetrievalArtifact, ScoreArtifact,
};
use crate::kgraph::ParetoFront;
use crate::online::DecisionRecord;
use crate::{Error, Result};

pub const REPORT_DIR: &str = "report";
pub const NPS_BINS: usize = 10;

fn csv_text<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// Counts of `values` in `NPS_BINS` equal bins over [0, 1]; 1.0 falls in
/// the last bin.
pub fn histogram(values: &[f64]) -> [usize; NPS_BINS] {
    let mut h = [0; NPS_BINS];
    for v in values {
        let b = ((v.clamp(0.0, 1.0) * NPS_BINS as f64) as usize).min(NPS_BINS - 1);
        h[b] += 1;
    }
    h
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    )
}

fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut s = svg_open(title);
    let max = values.iter().copied().fold(0.0, f64::max).max(1e-12);
    let slot = (W - 2.0 * PAD) / values.len().max(1) as f64;
    for (i, (l, v)) in labels.iter().zip(values).enumerate() {
        let h = (H - 2.0 * PAD) * v / max;
        let x = PAD + i as f64 * slot + slot * 0.1;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"steelblue\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{l}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v}</text>",
            H - PAD - h,
            slot * 0.8,
            x + slot * 0.4,
            H - PAD + 14.0,
            x + slot * 0.4,
            H - PAD - h - 3.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn pareto_chart(front: &ParetoFront) -> String {
    let mut s = svg_open("Claims: relevance vs validation (front in red, size = NPS)");
    let px = |v: f64| PAD + v.clamp(0.0, 1.0) * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - v.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut on_front = vec![false; front.candidates.len()];
    for &i in &front.front {
        on_front[i] = true;
    }
    for (c, on) in front.candidates.iter().zip(&on_front) {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{:.1}\" fill=\"{}\" fill-opacity=\"0.6\"/>",
            px(c.relevance),
            py(c.validation),
            2.0 + 4.0 * c.nps,
            if *on { "crimson" } else { "gray" }
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">R</text>", W / 2.0, H - 8.0);
    let _ = writeln!(s, "<text x=\"12\" y=\"{}\">Y</text>", H / 2.0);
    s.push_str("</svg>\n");
    s
}

/// Writes the report files under `<out>/report` and returns their paths
/// relative to `out`.
pub fn write_report(out: &Path, cfg: &PipelineConfig) -> Result<Vec<String>> {
    let ia: IngestArtifact = read_json(out, "ingest.json")?;
    let ca: ClusterArtifact = read_json(out, "cluster.json")?;
    let cz: CausalArtifact = read_json(out, "causal.json")?;
    let ba: BnArtifact = read_json(out, "bn.json")?;
    let ha: HypothesesArtifact = read_json(out, "hypotheses.json")?;
    let ra: RetrievalArtifact = read_json(out, "retrievals.json")?;
    let sa: ScoreArtifact = read_json(out, "claims.json")?;
    let front: ParetoFront = read_json(out, "front.json")?;
    let names = &ia.matrix.column_names;
    let sp_names = ca.sp_names();
    let dir = out.join(REPORT_DIR);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(format!("{REPORT_DIR}/{name}"));
        Ok(())
    };

    let sizes = ca.model.sizes();
    put(
        "clusters.csv",
        csv_text(
            &["cluster", "size", "context", "dominant_features", "causal_edges"],
            (0..ca.model.k).map(|k| {
                let ps = &cz.phenotypes[k];
                vec![
                    k.to_string(),
                    sizes[k].to_string(),
                    ps.context.join("; "),
                    ps.dominant_features.iter().map(|d| format!("{}:{:+.2}", d.name, d.deviation)).collect::<Vec<_>>().join("; "),
                    cz.graphs[k].edges.len().to_string(),
                ]
            }),
        )?,
    )?;

    let mut header = vec!["cluster"];
    header.extend(sp_names.iter().map(String::as_str));
    put(
        "sp_mixtures.csv",
        csv_text(&header, ca.mixtures.iter().map(|m| std::iter::once(m.cluster_id.to_string()).chain(m.omega.iter().map(|w| f(*w))))
        )?,
    )?;

    put(
        "causal_edges.csv",
        csv_text(
            &["cluster", "from", "to", "weight"],
            cz.graphs.iter().flat_map(|g| {
                g.edges.iter().map(move |e| vec![g.cluster_id.to_string(), names[e.from].clone(), names[e.to].clone(), f(e.weight)])
            }),
        )?,
    )?;

    put("bn_networks.json", serde_json::to_string_pretty(&ba.nets)? + "\n")?;

    let retrieval = |id: &str| ra.retrievals.iter().find(|r| r.hypothesis_id == id);
    put(
        "hypotheses.csv",
        csv_text(
            &[
                "cluster", "hypothesis", "intervention", "outcome", "s_struct", "s_path", "s_prob", "s_mb", "s_var", "s_lit",
                "nps", "hits", "retained_documents",
            ],
            ha.hypotheses.iter().map(|rh| {
                let h = &rh.hypothesis;
                let b = sa.nps.get(&h.id).unwrap_or(&rh.preliminary);
                let r = retrieval(&h.id);
                let mut row = vec![h.cluster_id.to_string(), h.id.clone(), h.intervention.clone(), h.outcome.clone()];
                row.extend(b.normalized.iter().map(|v| f(*v)));
                row.push(f(b.nps));
                row.push(r.map_or(0, |r| r.hits).to_string());
                row.push(r.map_or(0, |r| r.retained(&cfg.evidence.weights).count()).to_string());
                row
            }),
        )?,
    )?;

    let mut hist_rows = Vec::new();
    let mut all_nps = Vec::new();
    for k in 0..ca.model.k {
        let values: Vec<f64> = ha
            .hypotheses
            .iter()
            .filter(|rh| rh.hypothesis.cluster_id == k)
            .map(|rh| sa.nps.get(&rh.hypothesis.id).map_or(rh.preliminary.nps, |b| b.nps))
            .collect();
        all_nps.extend(values.iter().copied());
        for (b, count) in histogram(&values).iter().enumerate() {
            hist_rows.push(vec![
                k.to_string(),
                f(b as f64 / NPS_BINS as f64),
                f((b + 1) as f64 / NPS_BINS as f64),
                count.to_string(),
            ]);
        }
    }
    put("nps_histogram.csv", csv_text(&["cluster", "bin_low", "bin_high", "count"], hist_rows)?)?;

    put(
        "front.csv",
        csv_text(
            &["claim", "hypothesis", "document", "subject", "relation", "object", "relevance", "validation", "nps", "selected"],
            front.members().map(|c| {
                vec![
                    c.claim.claim_id.clone(),
                    c.claim.hypothesis_id.clone(),
                    c.claim.doc_id.clone(),
                    c.claim.subject.text.clone(),
                    c.claim.relation.label().to_string(),
                    c.claim.object.text.clone(),
                    f(c.relevance),
                    f(c.validation),
                    f(c.nps),
                    (c.validation >= cfg.evidence.weights.tau_c).to_string(),
                ]
            }),
        )?,
    )?;

    let decisions_path = out.join("online").join("decisions.jsonl");
    if decisions_path.exists() {
        let text = fs::read_to_string(&decisions_path).map_err(|e| Error::io(&decisions_path, e))?;
        let records = text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect::<std::result::Result<Vec<DecisionRecord>, _>>()?;
        put(
            "decisions.csv",
            csv_text(
                &["state", "kind", "score_star", "anomaly_score", "indicator", "anomalous", "candidate"],
                records.iter().map(|r| {
                    let kind = serde_json::to_value(&r.decision.decision).ok().and_then(|v| v["kind"].as_str().map(String::from));
                    vec![
                        r.state_id.to_string(),
                        kind.unwrap_or_default(),
                        f(r.decision.score_star),
                        f(r.anomaly_score),
                        r.anomaly_indicator.to_string(),
                        r.anomalous.to_string(),
                        r.candidate.map(|c| c.candidate.to_string()).unwrap_or_default(),
                    ]
                }),
            )?,
        )?;
    }

    let labels: Vec<String> = (0..ca.model.k).map(|k| format!("P{k}")).collect();
    put("cluster_sizes.svg", bar_chart("Phenotype sizes", &labels, &sizes.iter().map(|&s| s as f64).collect::<Vec<_>>()))?;
    let bins: Vec<String> = (0..NPS_BINS).map(|b| format!("{:.1}", b as f64 / NPS_BINS as f64)).collect();
    put(
        "nps_histogram.svg",
        bar_chart("Hypothesis NPS", &bins, &histogram(&all_nps).iter().map(|&c| c as f64).collect::<Vec<_>>()),
    )?;
    put("pareto_front.svg", pareto_chart(&front))?;

    let selected = front.members().filter(|c| c.validation >= cfg.evidence.weights.tau_c).count();
    let mut summary = String::new();
    let _ = writeln!(summary, "states: {}  features: {}", ia.matrix.n_states(), names.len());
    let _ = writeln!(summary, "phenotypes: {}  silhouette: {:.4}", ca.model.k, ca.model.silhouette);
    let _ = writeln!(summary, "causal edges per phenotype: {:?}", cz.graphs.iter().map(|g| g.edges.len()).collect::<Vec<_>>());
    let _ = writeln!(summary, "hypotheses: {}", ha.hypotheses.len());
    let _ = writeln!(
        summary,
        "documents fetched: {}  retained: {}",
        ra.retrievals.iter().map(|r| r.documents.len()).sum::<usize>(),
        ra.retrievals.iter().map(|r| r.retained(&cfg.evidence.weights).count()).sum::<usize>()
    );
    let _ = writeln!(summary, "claims: {}  dropped: {}", sa.claims.len(), sa.dropped.len());
    let _ = writeln!(summary, "pareto front: {}  added to graph (Y >= {}): {}", front.front.len(), cfg.evidence.weights.tau_c, selected);
    put("summary.txt", summary)?;
    Ok(written)
}
