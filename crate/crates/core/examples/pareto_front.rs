//! Pareto selection over (relevance, validation, score) triples and a
//! small knowledge graph written as GraphML.
//!
//! ```text
//! cargo run --example pareto_front
//! ```

use phenokg::kgraph::{front_indices, graphml, EdgeKind, KnowledgeGraph, NodeKind};
use serde_json::json;

fn main() -> phenokg::Result<()> {
    let claims = [
        ("short sleep increases anxiety", [0.82, 0.55, 0.61]),
        ("exercise reduces stress", [0.64, 0.80, 0.52]),
        ("caffeine worsens sleep", [0.60, 0.50, 0.40]),
        ("screen time lowers gpa", [0.40, 0.30, 0.70]),
        ("social support improves mood", [0.55, 0.45, 0.35]),
    ];
    let points: Vec<[f64; 3]> = claims.iter().map(|c| c.1).collect();
    let front = front_indices(&points);
    for (i, (text, p)) in claims.iter().enumerate() {
        let mark = if front.contains(&i) { "*" } else { " " };
        println!("{mark} {p:?} {text}");
    }

    let mut g = KnowledgeGraph::new();
    g.add_features(&["sleep_duration".to_string(), "anxiety".to_string()]);
    g.add_node(NodeKind::Document, "1001", [("title".to_string(), json!("Sleep and anxiety"))].into(), false);
    g.add_node(NodeKind::Hypothesis, "h0", Default::default(), false);
    g.add_edge(EdgeKind::SupportedBy, "hypothesis:h0", "document:1001", "", Default::default(), false)?;
    println!("version {}", g.commit());
    print!("{}", graphml(&g));
    Ok(())
}
