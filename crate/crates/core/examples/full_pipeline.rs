//! Runs every stage on a config and prints what each one produced.
//!
//! ```text
//! cargo run --release --example generate_data -- data
//! cargo run --release --example full_pipeline -- data/golden.toml
//! ```

use std::path::PathBuf;

use phenokg::pipeline::{run_pipeline, PipelineConfig};

fn main() -> phenokg::Result<()> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/golden.toml".into()));
    let cfg = PipelineConfig::load(&path)?;
    let manifest = run_pipeline(cfg.clone(), false)?;
    for s in &manifest.stages {
        let files: Vec<&str> = s.artifacts.iter().map(|a| a.path.as_str()).collect();
        println!("{:<12} {:>7.2}s  {}", s.stage.name(), s.seconds, files.join(", "));
    }
    let summary = cfg.output.join("report").join("summary.txt");
    if let Ok(text) = std::fs::read_to_string(&summary) {
        print!("\n{text}");
    }
    Ok(())
}
