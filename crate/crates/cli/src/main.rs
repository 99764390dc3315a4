use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evret_core::pipeline::{
    generate_synthetic, Pipeline, PipelineConfig, PipelineError, Stage, StageOutcome, WorkdirLock,
};
use evret_core::retrieval::format_table;
use evret_core::synthetic::SyntheticConfig;

const EXIT_USAGE: u8 = 1;
const EXIT_STAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "evret", version, about = "Event-centric generative document retrieval")]
struct Cli {
    /// Pipeline configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides paths.workdir
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Overrides every seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a templated synthetic corpus and its test queries
    GenSynthetic {
        #[arg(long)]
        n_docs: Option<usize>,
        #[arg(long)]
        events_per_doc: Option<usize>,
        /// Defaults to paths.documents from the config, else ./documents.jsonl
        #[arg(long)]
        documents: Option<PathBuf>,
        /// Defaults to paths.queries from the config, else ./queries.jsonl
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Validate and normalize the corpus into the workdir
    Ingest,
    /// Extract events and relations
    Extract,
    /// Build training units
    Represent,
    /// Build document identifiers
    BuildIds,
    /// Train the model
    Train,
    /// Rank documents for one query
    Retrieve {
        query: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Evaluate on the test queries
    Eval,
    /// Run every stage, skipping those that are up to date
    Pipeline,
}

enum Failure {
    Usage(String),
    Run(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => Failure::Usage(m),
            other => Failure::Run(other),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<PipelineConfig>, Failure> {
    let Some(path) = &cli.config else { return Ok(None) };
    let mut config = PipelineConfig::load(path)?;
    if let Some(w) = &cli.workdir {
        config.paths.workdir = w.clone();
    }
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(Some(config))
}

fn require(config: Option<PipelineConfig>) -> Result<PipelineConfig, Failure> {
    config.ok_or_else(|| Failure::Usage("this command needs --config <FILE>".into()))
}

fn stage_of(command: &Command) -> Option<Stage> {
    Some(match command {
        Command::Ingest => Stage::Ingest,
        Command::Extract => Stage::Extract,
        Command::Represent => Stage::Represent,
        Command::BuildIds => Stage::BuildIds,
        Command::Train => Stage::Train,
        Command::Eval => Stage::Eval,
        _ => return None,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::GenSynthetic { n_docs, events_per_doc, documents, queries } => {
            let mut synth: SyntheticConfig = config.as_ref().map(|c| (&c.synthetic).into()).unwrap_or_default();
            if let Some(n) = n_docs {
                synth.n_docs = *n;
            }
            if let Some(e) = events_per_doc {
                synth.events_per_doc = *e;
            }
            if let Some(seed) = cli.seed {
                synth.seed = seed;
            }
            if synth.n_docs == 0 {
                return Err(Failure::Usage("--n-docs must be at least 1".into()));
            }
            let pick = |flag: &Option<PathBuf>, from_config: Option<PathBuf>, fallback: &str| {
                flag.clone().or(from_config).unwrap_or_else(|| PathBuf::from(fallback))
            };
            let docs = pick(documents, config.as_ref().map(|c| c.paths.documents.clone()), "documents.jsonl");
            let qs = pick(queries, config.as_ref().map(|c| c.paths.queries.clone()), "queries.jsonl");
            let corpus = generate_synthetic(&synth, &docs, &qs)?;
            println!(
                "wrote {} documents to {} and {} queries to {}",
                corpus.len(),
                docs.display(),
                corpus.queries().len(),
                qs.display()
            );
        }
        Command::Retrieve { query, top_k } => {
            if *top_k == 0 {
                return Err(Failure::Usage("--top-k must be at least 1".into()));
            }
            let pipeline = Pipeline::new(require(config)?);
            if !pipeline.workdir().is_dir() {
                return Err(Failure::Run(PipelineError::Stage {
                    stage: Stage::Eval,
                    message: format!("workdir {} does not exist; run `evret pipeline` first", pipeline.workdir().display()),
                }));
            }
            for (rank, hit) in pipeline.retrieve(query, *top_k)?.iter().enumerate() {
                println!("{}\t{}\t{:.6}\t{}", rank + 1, hit.doc_id, hit.logprob, hit.identifier.join(" "));
            }
        }
        Command::Pipeline => {
            let pipeline = Pipeline::new(require(config)?);
            pipeline.check_sources()?;
            let _lock = WorkdirLock::acquire(pipeline.workdir())?;
            let report = pipeline.run_all(|stage, outcome| match outcome {
                StageOutcome::Ran => println!("{stage}: done"),
                StageOutcome::Skipped => println!("{stage}: skipped (up to date)"),
            })?;
            print!("{}", format_table(&[report]));
        }
        other => {
            let stage = stage_of(other).expect("remaining commands are stages");
            let pipeline = Pipeline::new(require(config)?);
            if stage == Stage::Ingest {
                pipeline.check_sources()?;
            }
            let _lock = WorkdirLock::acquire(pipeline.workdir())?;
            pipeline.write_snapshot()?;
            if stage == Stage::Eval {
                let report = pipeline.eval()?;
                print!("{}", format_table(&[report]));
            } else {
                pipeline.run_stage(stage)?;
            }
            println!("{stage}: done");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            log::debug!("{e:?}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
