mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hitl", version, about = "Race-aware human-in-the-loop facial verification")]
struct Cli {
    /// Log filter, e.g. `info` or `hitl_core=debug`.
    #[arg(long, global = true, env = "HITL_LOG", default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score model verdicts per pair and split them into finalized and routed.
    Triage(TriageArgs),
    /// Build task assignments for a worker list.
    Assign(AssignArgs),
    /// Run seeded Monte Carlo replications with synthetic workers.
    Simulate(SimulateArgs),
    /// Rebuild the experiment report from a gateway event log.
    Report(ReportArgs),
    /// Run the worker-facing task gateway.
    Serve(ServeArgs),
    /// Statistical tests on numbers read from standard input.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Debug, Args)]
struct TriageArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    verdicts: PathBuf,
    /// uncertain_all, uncertain_negatives, uncertain_positives, all_negatives or all_positives.
    #[arg(long, default_value = "uncertain_all")]
    policy: String,
    #[arg(long)]
    tau: Option<f64>,
    /// Per-pair triage records.
    #[arg(long)]
    out: PathBuf,
    /// Also write the routed pairs as a manifest.
    #[arg(long)]
    routed_manifest: Option<PathBuf>,
    /// Downsample every race stratum to the smallest before routing.
    #[arg(long)]
    balance: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated canonical labels.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct AssignArgs {
    /// Routed manifest to draw pairs from.
    #[arg(long)]
    manifest: PathBuf,
    /// Worker records: worker_id, self_identified_race, optional prior_experience.
    #[arg(long)]
    workers: PathBuf,
    /// same_race or balanced_across_races.
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = hitl_core::assignment::DEFAULT_QUOTA)]
    quota: usize,
    #[arg(long, default_value_t = hitl_core::assignment::DEFAULT_GOLD_COUNT)]
    gold_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    coding_table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Summary report text.
    #[arg(long)]
    out: PathBuf,
    /// Per-run records.
    #[arg(long)]
    run_log: Option<PathBuf>,
    /// Run replications one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Gateway event log (events.jsonl).
    #[arg(long)]
    log: PathBuf,
    /// Manifest holding ground truth; defaults to the one recorded in the log.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "HITL_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "HITL_BIND", default_value = "127.0.0.1")]
    bind: String,
    /// Experiment configuration file.
    #[arg(long)]
    experiment: PathBuf,
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Kruskal-Wallis H test; one group per input line.
    Kw,
    /// Shapiro-Wilk W test on all input numbers.
    Sw,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Triage(a) => commands::triage(a),
        Command::Assign(a) => commands::assign(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Report(a) => commands::report(a),
        Command::Serve(a) => commands::serve(a),
        Command::Stats(StatsCommand::Kw) => commands::stats_kw(),
        Command::Stats(StatsCommand::Sw) => commands::stats_sw(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log_level))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hitl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
