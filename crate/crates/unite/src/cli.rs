//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use unite_core::control::EuScope;
use unite_core::eu::{Estimator, TopK};

use crate::config::{Overrides, RunConfig, Target};
use crate::error::CliError;
use crate::parallel::init_threads;
use crate::provider::require_state_files;
use crate::stages;

#[derive(Debug, Parser)]
#[command(
    name = "unite",
    version,
    about = "Uncertainty-driven corpus sampling for retriever domain adaptation",
    after_help = "Exit codes: 0 ok, 1 usage, 2 validation, 3 data, 4 provider.\n\
                  UNITE_THREADS caps the number of worker threads."
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and tokenize the corpus; write ingest.json
    Ingest,
    /// Build the lexicon and index; write lexicon.tsv
    Index,
    /// k-NN lexical distance of every document; write distances.tsv
    Knn,
    /// Median k-NN distance for several k; write profile.tsv
    KnnProfile {
        /// Comma-separated, strictly ascending values of k
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Profile an evenly spaced sample of this many documents
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Drop lexically isolated documents; write filter_report.json
    AuFilter,
    /// Validate the files of a state directory
    ExportCheck,
    /// Score documents with the current model state; write eu_scores.tsv
    Eu,
    /// k-means over document embeddings; write clusters.tsv
    Cluster,
    /// Pick one batch from clusters.tsv and eu_scores.tsv
    Sample,
    /// Run the full sampling loop against a state directory
    Loop,
    /// Run the pipeline on a synthetic corpus with a built-in model
    Simulate,
    /// Render trace.csv as trace.svg and summary.txt
    Report {
        /// Trace to render (default: <output-dir>/trace.csv)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    TopkIdf,
    Entropy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    All,
    Unsampled,
}

/// `1000` is a fixed count; a value with a decimal point is a fraction of
/// the vocabulary.
fn parse_top_k(raw: &str) -> Result<TopK, String> {
    if raw.contains('.') {
        let f: f64 = raw.parse().map_err(|e| format!("{e}"))?;
        Ok(TopK::VocabFraction { vocab_fraction: f })
    } else {
        raw.parse().map(TopK::Fixed).map_err(|e| format!("{e}"))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Use defaults when the config file does not exist
    #[arg(long, global = true)]
    pub defaults: bool,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub state_dir: Option<PathBuf>,
    #[arg(long, short = 'o', global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    #[arg(long, global = true)]
    pub max_budget: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Top-k tokens for EU: a count, or a vocabulary fraction such as 0.03
    #[arg(long, global = true, value_parser = parse_top_k)]
    pub k_eu: Option<TopK>,
    #[arg(long, global = true)]
    pub z_thr: Option<f64>,
    #[arg(long, global = true)]
    pub k_nn: Option<usize>,
    #[arg(long, global = true)]
    pub min_iterations: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub penalty: Option<bool>,
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long, global = true, value_enum)]
    pub eu_scope: Option<ScopeArg>,
    #[arg(long, global = true)]
    pub k1: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    #[arg(long, global = true)]
    pub query_cap: Option<usize>,
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    #[arg(long, global = true)]
    pub update_command: Option<String>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            corpus: self.corpus.clone(),
            state_dir: self.state_dir.clone(),
            output_dir: self.output_dir.clone(),
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            max_budget: self.max_budget,
            alpha: self.alpha,
            lambda: self.lambda,
            k_eu: self.k_eu,
            z_thr: self.z_thr,
            k_nn: self.k_nn,
            min_iterations: self.min_iterations,
            seed: self.seed,
            penalty: self.penalty,
            estimator: self.estimator.map(|e| match e {
                EstimatorArg::TopkIdf => Estimator::TopKIdf,
                EstimatorArg::Entropy => Estimator::Entropy,
            }),
            eu_scope: self.eu_scope.map(|s| match s {
                ScopeArg::All => EuScope::All,
                ScopeArg::Unsampled => EuScope::Unsampled,
            }),
            k1: self.k1,
            b: self.b,
            query_cap: self.query_cap,
            clusters: self.clusters,
            update_command: self.update_command.clone(),
        }
    }
}

/// Resolve the configuration for `cli`: defaults, file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let target = match cli.command {
        Command::Simulate => Target::Sim,
        _ => Target::Main,
    };
    let mut cfg = RunConfig::load(cli.common.config.as_deref(), cli.common.defaults)?;
    cfg.apply(&cli.common.overrides(), target);
    if let Command::KnnProfile { ks, sample } = &cli.command {
        if let Some(ks) = ks {
            cfg.profile_ks = ks.clone();
        }
        if sample.is_some() {
            cfg.profile_sample = *sample;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Check every input path the command will touch before running it.
fn preflight(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    use Command::*;
    if matches!(command, Ingest | Index | Knn | KnnProfile { .. } | AuFilter | Loop) {
        cfg.require_corpus()?;
    }
    if matches!(command, ExportCheck | Eu | Cluster | Sample | Loop) {
        require_state_files(cfg.require_state_dir()?)?;
    }
    if let Some(cmd) = &cfg.update_command {
        if !matches!(command, Loop) && !cmd.is_empty() {
            eprintln!("unite: note: update_command is only used by `loop`");
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = resolve_config(cli)?;
    preflight(&cli.command, &cfg)?;
    match &cli.command {
        Command::Ingest => stages::ingest(&cfg),
        Command::Index => stages::index(&cfg),
        Command::Knn => stages::knn(&cfg),
        Command::KnnProfile { .. } => stages::knn_profile(&cfg),
        Command::AuFilter => stages::au_filter(&cfg),
        Command::ExportCheck => stages::export_check(&cfg).map(drop),
        Command::Eu => stages::eu(&cfg),
        Command::Cluster => stages::cluster(&cfg),
        Command::Sample => stages::sample(&cfg).map(drop),
        Command::Loop => stages::run_full_loop(&cfg).map(drop),
        Command::Simulate => stages::simulate(&cfg),
        Command::Report { trace } => stages::report(&cfg, trace.as_deref()),
    }
}

/// One JSON line describing a failure, for standard error.
pub fn error_line(e: &CliError) -> String {
    serde_json::json!({
        "error": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    })
    .to_string()
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { crate::error::exit::USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}
