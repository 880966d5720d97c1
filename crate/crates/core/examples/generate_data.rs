//! Writes the bundled synthetic dataset, literature corpus, standard
//! phenotype definitions, alias dictionary and pipeline configs.
//!
//! ```text
//! cargo run --example generate_data -- data
//! ```

use std::fs;
use std::path::PathBuf;

use phenokg::pipeline::config::render_standard_phenotypes;
use phenokg::synthetic::{aliases, generate_arrivals, generate_corpus, generate_population, standard_phenotypes, schema};

const SEED: u64 = 7;

fn config(backend: &str) -> String {
    let mut s = String::from("seed = 7\noutput = \"../out\"\n\n[data]\npath = \"students.csv\"\n");
    s.push_str("standard_phenotypes = \"standard_phenotypes.toml\"\naliases = \"aliases.toml\"\n\n");
    for f in schema() {
        let kind = serde_json::to_value(f.kind).unwrap();
        s.push_str(&format!("[[data.features]]\nname = \"{}\"\nkind = \"{}\"\n\n", f.name, kind.as_str().unwrap()));
    }
    s.push_str("[cluster]\nknn = 15\nk_min = 2\nk_max = 10\n\n");
    s.push_str("[hypothesis]\nmax_hypotheses = 8\n\n");
    s.push_str("[evidence]\nretrieval_limit = 10\n\n");
    s.push_str(backend);
    s
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    fs::create_dir_all(&dir)?;

    let pop = generate_population(1000, SEED);
    fs::write(dir.join("students.csv"), pop.to_csv())?;
    let arrivals = generate_arrivals(20, 6, SEED + 1);
    fs::write(dir.join("arrivals.csv"), arrivals.to_csv())?;

    let defs: Vec<_> = standard_phenotypes().into_iter().map(|d| (d.name, d.weights)).collect();
    fs::write(dir.join("standard_phenotypes.toml"), render_standard_phenotypes(&defs))?;
    fs::write(dir.join("aliases.toml"), toml::to_string(&aliases()).unwrap())?;

    let corpus = generate_corpus(SEED);
    let mut lines = String::new();
    for r in &corpus {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    fs::write(dir.join("corpus.jsonl"), lines)?;

    fs::write(
        dir.join("corpus.toml"),
        config("[backend]\nmode = \"corpus\"\ncorpus = \"corpus.jsonl\"\nrecord = \"fixtures\"\n"),
    )?;
    fs::write(dir.join("golden.toml"), config("[backend]\nmode = \"fixtures\"\nfixtures = \"fixtures\"\n"))?;
    println!(
        "wrote {} states, {} arrivals, {} corpus records to {}",
        pop.rows.len(),
        arrivals.rows.len(),
        corpus.len(),
        dir.display()
    );
    Ok(())
}
