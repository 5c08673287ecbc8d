mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cadmap",
    version,
    about = "Map 2D drawing annotations to 3D CAD features"
)]
struct Cli {
    /// Worker threads for per-part work (defaults to available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map one part, or every part of a corpus directory, to proposed specs.
    Map(MapArgs),
    /// Score specs against ground truth, or run ablations over a corpus.
    Eval(EvalArgs),
    /// Generate a synthetic corpus with ground truth.
    Gen(GenArgs),
    /// Serve a spec directory for review over HTTP.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Oracle,
    FirstCandidate,
    AlwaysReject,
    Scripted,
}

#[derive(Args, Clone)]
pub struct PipelineArgs {
    /// Pipeline configuration JSON; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Compatibility table override JSON.
    #[arg(long)]
    pub compat: Option<PathBuf>,
    /// Ablation variant applied on top of the configuration.
    #[arg(long)]
    pub ablate: Option<String>,
    /// Under no_heuristics, keep semantic dimension routing.
    #[arg(long)]
    pub keep_routing: bool,
    /// Timestamp for provenance events (RFC 3339). Falls back to
    /// SOURCE_DATE_EPOCH, then to the Unix epoch when offline.
    #[arg(long)]
    pub now: Option<String>,
}

#[derive(Args)]
pub struct MapArgs {
    #[arg(long, required_unless_present = "corpus", requires = "entities")]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub entities: Option<PathBuf>,
    /// Corpus directory with one sub-directory per part.
    #[arg(long, conflicts_with_all = ["features", "entities"])]
    pub corpus: Option<PathBuf>,
    /// Output spec file, or output directory with --corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Part id for a single part (defaults to the id in the features file).
    #[arg(long)]
    pub part_id: Option<String>,
    /// Ground truth used by the oracle policy (per part truth.json with --corpus).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "always-reject")]
    pub escalation_policy: Policy,
    /// Scripted-mock NDJSON file for the scripted policy.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Rule-based enrichment and mock escalation (the default).
    #[arg(long, conflicts_with = "online")]
    pub offline: bool,
    /// Send escalations to --endpoint with the credential in --credential-env.
    #[arg(long, requires_all = ["endpoint", "credential_env"])]
    pub online: bool,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub credential_env: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Spec file to score (with --truth).
    #[arg(long, conflicts_with = "corpus")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Corpus directory; scores specs from --specs, or runs --ablate.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory of `<part_id>.json` specs produced by `map --corpus`.
    #[arg(long)]
    pub specs: Option<PathBuf>,
    /// JSON report output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub parts: usize,
    #[arg(long, default_value = "table1")]
    pub profile: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ServeArgs {
    /// Directory of spec documents.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: std::net::SocketAddr,
    /// Built review UI bundle to serve at `/`.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
        {
            log::warn!("could not size worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Map(args) => commands::map(args),
        Command::Eval(args) => commands::eval(args),
        Command::Gen(args) => commands::gen(args),
        Command::Serve(args) => commands::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
