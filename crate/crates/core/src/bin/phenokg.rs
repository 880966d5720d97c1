use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use phenokg::pipeline::{match_states, BackendMode, Pipeline, PipelineConfig, Stage};
use phenokg::Result;

#[derive(Parser)]
#[command(name = "phenokg", version, about = "Phenotype-driven knowledge graph expansion")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "phenokg.toml")]
    config: PathBuf,
    /// Skip stages whose artifacts are already present and verify.
    #[arg(long, global = true)]
    resume: bool,
    /// Serve every external call from recorded fixtures in this directory.
    #[arg(long, global = true, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    /// Override the root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Ingest,
    Cluster,
    Causal,
    Bn,
    Hypothesize,
    Retrieve,
    Score,
    Expand,
    /// Decide new states against a finished run; one JSON record per line.
    Match {
        input: PathBuf,
    },
    Report,
    /// All stages in order.
    Run,
}

fn load(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.fixtures {
        cfg.backend.mode = BackendMode::Fixtures;
        cfg.backend.fixtures = Some(dir.clone());
        cfg.validate()?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let stage = match &cli.command {
        Command::Run => {
            let manifest = Pipeline::new(cfg).run(cli.resume)?;
            println!("{}", serde_json::to_string(&manifest)?);
            return Ok(());
        }
        Command::Match { input } => {
            let outcome = match_states(&cfg, input)?;
            for r in &outcome.records {
                println!("{}", serde_json::to_string(r)?);
            }
            return Ok(());
        }
        Command::Ingest => Stage::Ingest,
        Command::Cluster => Stage::Cluster,
        Command::Causal => Stage::Causal,
        Command::Bn => Stage::Bn,
        Command::Hypothesize => Stage::Hypothesize,
        Command::Retrieve => Stage::Retrieve,
        Command::Score => Stage::Score,
        Command::Expand => Stage::Expand,
        Command::Report => Stage::Report,
    };
    let mut pipeline = Pipeline::new(cfg);
    std::fs::create_dir_all(pipeline.out()).map_err(|e| phenokg::Error::io(pipeline.out(), e))?;
    let mut manifest = pipeline.manifest()?;
    if cli.resume && manifest.verify_stage(pipeline.out(), stage) {
        log::info!("stage {} up to date; skipped", stage.name());
        return Ok(());
    }
    pipeline.run_stage(stage, &mut manifest)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
