use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use duet::commands::{self, BaselineKind, CliError, REPORT_FILE};
use duet::config::load_config;

/// Closed-loop profile optimization: curate review corpora, train the
/// strategy policy against a frozen recommender, and evaluate rating and
/// ranking quality.
#[derive(Parser)]
#[command(name = "duet", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory for all artifacts.
    #[arg(short, long)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    /// Feed the raw recent history text directly to the predictor.
    #[value(name = "10h")]
    TenH,
    /// Extractive summaries as profiles.
    Textrank,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world and its review corpus.
    Simgen,
    /// Ingest raw reviews, k-core filter, split by timestamp, persist.
    Ingest,
    /// Run GRPO training and write a checkpoint plus the training log.
    Train,
    /// Evaluate a checkpoint over the test split.
    Eval {
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a profile-free baseline through the same protocol.
    Baseline {
        #[arg(long, value_enum)]
        which: BaselineArg,
    },
    /// Fit the EASE item-item model on the train split.
    EaseFit,
    /// Pretty-print a stored report; optionally append a CSV row.
    Report {
        /// Defaults to <out>/report.json.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli.config)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simgen => commands::cmd_simgen(&config, out),
        Command::Ingest => commands::cmd_ingest(&config, out),
        Command::Train => commands::cmd_train(&config, out),
        Command::Eval { checkpoint } => {
            commands::cmd_eval(&config, out, checkpoint.as_deref(), REPORT_FILE)
        }
        Command::Baseline { which } => {
            let kind = match which {
                BaselineArg::TenH => BaselineKind::RawHistory,
                BaselineArg::Textrank => BaselineKind::TextRank,
            };
            commands::cmd_baseline(&config, out, kind)
        }
        Command::EaseFit => commands::cmd_ease_fit(&config, out),
        Command::Report { report, csv } => {
            let path = report.unwrap_or_else(|| out.join(REPORT_FILE));
            commands::cmd_report(&path, csv.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
