use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::error;
use redfactor::config::{IngestSource, PipelineConfig};
use redfactor::fixture::{write_fixture, FixtureSpec};
use redfactor::pipeline::{run_stages, PipelineError, Stage};

/// Turn a subreddit's comment stream into daily factors and test whether
/// they explain stock returns beyond the three-factor model.
#[derive(Parser)]
#[command(name = "redfactor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch or read comments and build the corpus.
    Ingest(Overrides),
    /// Pick (j, k) per stock and assign each comment a class.
    Classify(Overrides),
    /// Build the daily frequency and n-gram series.
    Factors(Overrides),
    /// Select buzzwords and fit every model.
    Regress(Overrides),
    /// Render the coefficient tables.
    Report(Overrides),
    /// Run every stage, skipping those already up to date.
    Run(Overrides),
    /// Write a synthetic corpus, returns file and config into a directory.
    Fixture {
        #[arg(long, default_value = "fixture")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    /// TOML config; built-in defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    subreddit: Option<String>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Comment search endpoint; implies fetching over HTTP.
    #[arg(long)]
    endpoint: Option<String>,
    /// Daily returns CSV.
    #[arg(long)]
    returns: Option<PathBuf>,
    #[arg(long, visible_alias = "out")]
    output_dir: Option<PathBuf>,
    /// Seed for the clustering grid.
    #[arg(long)]
    seed: Option<u64>,
    /// Rerun stages even if their inputs are unchanged.
    #[arg(long)]
    force: bool,
}

impl Overrides {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = &self.subreddit {
            cfg.subreddit = s.clone();
        }
        if let Some(d) = self.start {
            cfg.start = d;
        }
        if let Some(d) = self.end {
            cfg.end = d;
        }
        if let Some(e) = &self.endpoint {
            cfg.ingest.source = IngestSource::Endpoint;
            cfg.ingest.endpoint = e.clone();
        }
        if let Some(r) = &self.returns {
            cfg.regress.returns_csv = Some(r.clone());
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.classify.seed = s;
        }
        Ok(cfg)
    }
}

fn run(o: &Overrides, stages: &[Stage]) -> Result<(), PipelineError> {
    let cfg = o.config()?;
    let summary = run_stages(&cfg, stages, o.force)?;
    for s in &summary.executed {
        println!("{s}: done");
    }
    for s in &summary.skipped {
        println!("{s}: up to date");
    }
    println!("manifest: {}", cfg.output_dir.join(redfactor::pipeline::MANIFEST_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(o) => run(o, &[Stage::Ingest]),
        Command::Classify(o) => run(o, &[Stage::Classify]),
        Command::Factors(o) => run(o, &[Stage::Factors]),
        Command::Regress(o) => run(o, &[Stage::Regress]),
        Command::Report(o) => run(o, &[Stage::Report]),
        Command::Run(o) => run(o, &Stage::ALL),
        Command::Fixture { out, seed } => {
            let mut spec = FixtureSpec::default();
            if let Some(s) = seed {
                spec.seed = *s;
            }
            return match write_fixture(out, &spec) {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    error!("writing fixture: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if let PipelineError::Config(redfactor::config::ConfigError::Invalid(v)) = &e {
                for (field, problem) in &v.0 {
                    eprintln!("  {field}: {problem}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
