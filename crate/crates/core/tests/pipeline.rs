mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use common::{data_dir, golden_config};
use phenokg::ingest::load_dataset;
use phenokg::kgraph::{self, ParetoFront};
use phenokg::online::{buffer_candidate, CandidateBuffer, OnlineConfig};
use phenokg::pipeline::{
    match_states, online_encoder, promote_candidate, read_json, run_pipeline, sha256_file, ClusterArtifact,
    HypothesesArtifact, IngestArtifact, Pipeline, PipelineConfig, RunManifest, Stage, KG_DIR,
};

fn run(out: &Path) -> (PipelineConfig, RunManifest) {
    let cfg = golden_config(out);
    let m = run_pipeline(cfg.clone(), false).unwrap();
    (cfg, m)
}

fn checksums(m: &RunManifest) -> BTreeMap<String, String> {
    m.artifacts().map(|a| (a.path.clone(), a.sha256.clone())).collect()
}

#[test]
fn golden_run_verifies_and_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, ma) = run(a.path());
    let (_, mb) = run(b.path());
    for stage in Stage::ALL {
        assert!(ma.verify_stage(a.path(), stage), "{stage:?}");
    }
    for art in ma.artifacts() {
        assert_eq!(sha256_file(&a.path().join(&art.path)).unwrap(), art.sha256);
    }
    assert_eq!(checksums(&ma), checksums(&mb));
    let g = kgraph::load(&a.path().join(KG_DIR)).unwrap();
    assert!(g.nodes.len() > 0 && g.edges.len() > 0);
    assert_eq!(checksums(&RunManifest::load(a.path()).unwrap()), checksums(&ma));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, full) = run(a.path());

    let cfg = golden_config(b.path());
    let mut p = Pipeline::new(cfg.clone());
    std::fs::create_dir_all(b.path()).unwrap();
    let mut m = p.manifest().unwrap();
    for stage in [Stage::Ingest, Stage::Cluster, Stage::Causal, Stage::Bn] {
        p.run_stage(stage, &mut m).unwrap();
    }
    let cluster_before = std::fs::read(b.path().join("cluster.json")).unwrap();
    // A tampered artifact is redone, along with everything after it.
    std::fs::write(b.path().join("bn.json"), "{}").unwrap();
    let resumed = Pipeline::new(cfg).run(true).unwrap();
    assert_eq!(std::fs::read(b.path().join("cluster.json")).unwrap(), cluster_before);
    assert_eq!(checksums(&resumed), checksums(&full));
}

#[test]
fn bad_weights_are_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = golden_config(&out);
    cfg.evidence.weights.omega = [0.4, 0.3, 0.2];
    let e = run_pipeline(cfg, false).unwrap_err();
    assert!(e.is_validation());
    assert!(e.to_string().contains("evidence.omega"), "{e}");
    assert!(!out.exists());
}

#[test]
fn report_tables_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = run(dir.path());
    let front: ParetoFront = read_json(dir.path(), "front.json").unwrap();
    let ha: HypothesesArtifact = read_json(dir.path(), "hypotheses.json").unwrap();
    let report = dir.path().join("report");
    let rows = |name: &str| {
        let mut r = csv::Reader::from_path(report.join(name)).unwrap();
        r.records().map(|r| r.unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(rows("front.csv").len(), front.front.len());
    let hist: usize = rows("nps_histogram.csv").iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    assert_eq!(hist, ha.hypotheses.len());
    assert_eq!(rows("hypotheses.csv").len(), ha.hypotheses.len());
    for f in ["clusters.csv", "sp_mixtures.csv", "causal_edges.csv", "summary.txt", "pareto_front.svg"] {
        assert!(report.join(f).exists(), "{f}");
    }
}

#[test]
fn training_states_replay_on_the_online_path() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path());
    let enc = online_encoder(dir.path()).unwrap();
    let ia: IngestArtifact = read_json(dir.path(), "ingest.json").unwrap();
    let ca: ClusterArtifact = read_json(dir.path(), "cluster.json").unwrap();
    for i in (0..ia.matrix.n_states()).step_by(97) {
        let values: Vec<f64> = ia.matrix.values.row(i).iter().copied().collect();
        let s = enc.encode_values(i, values, &ca.model, &ca.mixtures).unwrap();
        for (a, b) in s.z.iter().zip(&ca.embeddings[i]) {
            assert!((a - b).abs() < 1e-12, "state {i}: {a} vs {b}");
        }
        for (a, b) in s.pi.iter().zip(&ca.soft[i].pi) {
            assert!((a - b).abs() < 1e-12, "state {i}: {a} vs {b}");
        }
    }
}

#[test]
fn matching_appends_records_and_continues_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = run(dir.path());
    let input = data_dir().join("arrivals.csv");
    let first = match_states(&cfg, &input).unwrap();
    let second = match_states(&cfg, &input).unwrap();
    assert_eq!(first.records.len(), 26);
    assert_eq!(first.records[0].state_id, 1000);
    assert_eq!(second.records[0].state_id, 1026);
    // Same states, same forest seed: same decisions and anomaly scores.
    for (a, b) in first.records.iter().zip(&second.records) {
        assert_eq!((&a.decision, a.anomaly_score, a.anomaly_indicator), (&b.decision, b.anomaly_score, b.anomaly_indicator));
    }
    let log = std::fs::read_to_string(dir.path().join("online/decisions.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 52);
    for r in first.records.iter().chain(&second.records) {
        if let phenokg::online::Decision::SoftMatch { clusters } = &r.decision.decision {
            assert!((clusters.iter().map(|c| c.1).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn promoted_candidate_adds_only_exploratory_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, _) = run(dir.path());
    // Accelerated queries are not in the recorded fixtures; answer them
    // from the bundled corpus instead.
    cfg.backend.mode = phenokg::pipeline::BackendMode::Corpus;
    cfg.backend.corpus = Some(data_dir().join("corpus.jsonl"));
    cfg.backend.fixtures = None;
    let before = kgraph::load(&dir.path().join(KG_DIR)).unwrap();

    let enc = online_encoder(dir.path()).unwrap();
    let ca: ClusterArtifact = read_json(dir.path(), "cluster.json").unwrap();
    let ia: IngestArtifact = read_json(dir.path(), "ingest.json").unwrap();
    let ds = load_dataset(&data_dir().join("arrivals.csv"), &ia.schema).unwrap();
    let online = OnlineConfig::default();
    let mut buffer = CandidateBuffer::default();
    let mut promoted = None;
    // The last six arrivals come from a configuration absent in training.
    for (i, rec) in ds.records.iter().enumerate().skip(20) {
        let s = enc.encode_record(1000 + i, rec, &ca.model, &ca.mixtures).unwrap();
        let o = buffer_candidate(&mut buffer, &s, &online);
        if o.promoted {
            promoted = Some(o.candidate);
        }
    }
    let cand = &buffer.candidates[promoted.expect("novel states merge into one candidate")];
    let p = promote_candidate(&cfg, cand, ca.model.k).unwrap();
    assert_eq!(p.phenotype_id, ca.model.k);
    assert!(!p.hypotheses.is_empty() && p.hypotheses.len() <= online.accelerated_hypotheses);

    let after = kgraph::load(&dir.path().join(KG_DIR)).unwrap();
    assert!(after.version > before.version);
    let new_nodes: Vec<_> = after.nodes.values().filter(|n| !before.nodes.contains_key(&n.id)).collect();
    let new_edges: Vec<_> = after.edges.iter().filter(|(k, _)| !before.edges.contains_key(*k)).map(|(_, e)| e).collect();
    assert!(!new_nodes.is_empty());
    assert!(new_nodes.iter().all(|n| n.exploratory), "{:?}", new_nodes.iter().find(|n| !n.exploratory));
    assert!(new_edges.iter().all(|e| e.exploratory));
    for (id, n) in &before.nodes {
        assert_eq!(&after.nodes[id], n);
    }
    assert!(after.node(&format!("phenotype:{}", ca.model.k)).is_some());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phenokg")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn write_config(cfg: &PipelineConfig, path: &Path) {
    std::fs::write(path, toml::to_string(cfg).unwrap()).unwrap();
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    let cfg = golden_config(&dir.path().join("out"));
    write_config(&cfg, &good);
    let good = good.to_str().unwrap();

    assert_eq!(cli(&["--config", "/nonexistent.toml", "run"]).status.code(), Some(1));

    let mut bad = cfg.clone();
    bad.hypothesis.theta = [0.2; 6];
    let bad_path = dir.path().join("bad.toml");
    write_config(&bad, &bad_path);
    assert_eq!(cli(&["--config", bad_path.to_str().unwrap(), "run"]).status.code(), Some(1));

    // A stage that needs earlier artifacts fails as a stage failure.
    assert_eq!(cli(&["--config", good, "cluster"]).status.code(), Some(2));

    // Empty fixture directory: retrieval cannot be answered.
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = cli(&["--config", good, "--fixtures", empty.to_str().unwrap(), "run"]);
    assert_eq!(out.status.code(), Some(2));

    let out = cli(&["--config", good, "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli(&["--config", good, "--resume", "run"]);
    assert_eq!(out.status.code(), Some(0));
    for stage in ["ingest", "cluster", "causal", "bn", "hypothesize", "retrieve", "score", "expand", "report"] {
        assert_eq!(cli(&["--config", good, stage]).status.code(), Some(0), "{stage}");
    }
    let out = cli(&["--config", good, "match", data_dir().join("arrivals.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 26);
    assert!(lines.iter().all(|l| l["kind"].is_string() && l["scores"].is_array() && l["anomaly_indicator"].is_i64()));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    write_config(&golden_config(&dir.path().join("out")), &path);
    let p = path.to_str().unwrap();
    assert_eq!(cli(&["--config", p, "--seed", "11", "ingest"]).status.code(), Some(0));
    assert_eq!(cli(&["--config", p, "--seed", "11", "cluster"]).status.code(), Some(0));
    let m = RunManifest::load(&dir.path().join("out")).unwrap();
    assert_eq!(m.seed, 11);
}
