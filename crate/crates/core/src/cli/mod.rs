//! Command-line front end for the whole pipeline.
//!
//! Every command reads and writes a conventional layout under `out_dir`:
//!
//! ```text
//! records/<TASK>.tsv                  perturbation records
//! datasets/<TASK>.tsv                 probing datasets (generated and external)
//! datasets_content/<TASK>.tsv         content-word-only datasets
//! embeddings/bow/<TASK>[.content].tsv BoW tables, plus clean.tsv
//! probes/<ENC>/seed<S>/<TASK>.probe   detection probes
//! probes_content/<ENC>/seed<S>/...    content-only probes
//! reports/                            ledger.tsv, summary.md, figures.csv,
//!                                     false_positives.tsv, overlap.tsv
//! .stamps/                            content hashes of finished commands
//! ```
//!
//! Exit codes: 0 ok, 2 input error, 3 config error, 4 invariant violation.

mod commands;
mod config;
mod workspace;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{MultiTaskSpec, RunConfig};
pub use workspace::{InputHash, Workspace};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        })*
    };
}

input_error!(
    crate::treebank::CorpusError,
    crate::dataset::DatasetError,
    crate::embed::EmbedError,
    crate::perturb::RecordsError,
    crate::experiments::LedgerError,
    std::io::Error
);

impl From<crate::probe::ProbeError> for CliError {
    fn from(e: crate::probe::ProbeError) -> Self {
        match e {
            crate::probe::ProbeError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<crate::experiments::ExperimentError> for CliError {
    fn from(e: crate::experiments::ExperimentError) -> Self {
        use crate::experiments::ExperimentError as E;
        match e {
            E::InvalidRequest(m) => CliError::Config(m),
            E::Probe(p) => p.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "synprobe", version, about = "Syntactic anomaly probing toolkit")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Parallel grid cells (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SeedArg {
    /// Probe training seed.
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Perturb a parse corpus into records/<TASK>.tsv.
    Perturb {
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        /// Perturbation kind (repeatable; default: configured tasks).
        #[arg(long = "kind")]
        kinds: Vec<String>,
    },
    /// Build balanced probing datasets from records.
    Build,
    /// Split the configured external datasets.
    Ingest,
    /// Write content-word-only versions of the generated datasets.
    FilterContent,
    /// Compute BoW embeddings for every dataset and the clean corpus.
    EmbedBow,
    /// Train the detection grid.
    Train(SeedArg),
    /// Evaluate one stored probe on one dataset split.
    Eval {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Evaluate every detection probe on every task's test split.
    Transfer(SeedArg),
    /// Multi-source transfer with a fixed training budget.
    Multitask(SeedArg),
    /// False-positive scan of the clean corpus.
    Fpscan(SeedArg),
    /// Content-word-only ablation.
    Ablate(SeedArg),
    /// Write summary.md and figures.csv from the ledger.
    Report,
    /// Every stage in order.
    Run(SeedArg),
}

/// Parses `args`, runs the command and returns the process exit code.
/// Summaries go to stdout as one JSON line; errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let name = command_name(&cli.command);
    match execute(cli) {
        Ok(summary) => {
            emit(&summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            emit(&serde_json::json!({"command": name, "ok": false, "error": e.to_string(), "exit_code": e.exit_code()}));
            e.exit_code()
        }
    }
}

/// A closed stdout (`| head`) is not an error worth panicking over.
fn emit(line: &serde_json::Value) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Perturb { .. } => "perturb",
        Command::Build => "build",
        Command::Ingest => "ingest",
        Command::FilterContent => "filter-content",
        Command::EmbedBow => "embed-bow",
        Command::Train(_) => "train",
        Command::Eval { .. } => "eval",
        Command::Transfer(_) => "transfer",
        Command::Multitask(_) => "multitask",
        Command::Fpscan(_) => "fpscan",
        Command::Ablate(_) => "ablate",
        Command::Report => "report",
        Command::Run(_) => "run",
    }
}

fn execute(cli: Cli) -> Result<serde_json::Value, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    use commands as c;
    if !matches!(cli.command, Command::Eval { .. }) {
        c::check_paths(&cfg)?;
    }
    match cli.command {
        Command::Perturb { corpus, kinds } => {
            if let Some(p) = corpus {
                cfg.corpus = Some(p);
            }
            if !kinds.is_empty() {
                cfg.tasks = kinds
                    .iter()
                    .map(|k| k.parse::<crate::perturb::PerturbationKind>().map(|k| k.as_str().to_string()))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            c::perturb(&cfg)
        }
        Command::Build => c::build(&cfg),
        Command::Ingest => c::ingest(&cfg),
        Command::FilterContent => c::filter_content(&cfg),
        Command::EmbedBow => c::embed_bow(&cfg),
        Command::Train(s) => c::train(&cfg, s.seed),
        Command::Eval { probe, dataset, embeddings, split } => c::eval(&probe, &dataset, &embeddings, &split),
        Command::Transfer(s) => c::transfer(&cfg, s.seed),
        Command::Multitask(s) => c::multitask(&cfg, s.seed),
        Command::Fpscan(s) => c::fpscan(&cfg, s.seed),
        Command::Ablate(s) => c::ablate(&cfg, s.seed),
        Command::Report => c::report(&cfg),
        Command::Run(s) => c::run_all(&cfg, s.seed),
    }
}
