mod commands;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the log filter (`error`, `warn`, `info`,
/// `debug`, `trace`).
const LOG_ENV: &str = "FLOODDAN_LOG";

#[derive(Parser)]
#[command(
    name = "flooddan",
    version,
    about = "Rainfall-runoff forecasting with adversarial transfer to ungauged watersheds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every training seed (for `synth`, the generator seeds).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for all artifacts of the run.
    #[arg(long, default_value = "flooddan-run")]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic source and target watersheds.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Supervised training on the source watershed.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Source series; defaults to `<out>/source.csv`.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Align a target encoder to the pretrained source encoder without target runoff.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        /// Stage-1 checkpoint; defaults to `<out>/pretrain.ckpt`.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Score the spliced model and the persistence baseline on the target test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Stage-2 checkpoint; defaults to `<out>/adapt.ckpt`.
        #[arg(long)]
        adapted: Option<PathBuf>,
        /// Also train and score a fully supervised target model.
        #[arg(long)]
        supervised: bool,
    },
    /// Supervised sweep over small labeled target subsets.
    Fewshot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: Option<PathBuf>,
        /// Comma-separated sample counts, e.g. `50,100,200`.
        #[arg(long, value_delimiter = ',')]
        hours: Option<Vec<usize>>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Report of the unsupervised model to place on the sweep; defaults
        /// to `<out>/adapt_report.json`.
        #[arg(long)]
        unsupervised_report: Option<PathBuf>,
    },
    /// Render SVG figures from run artifacts.
    Plot {
        #[arg(long, default_value = "flooddan-run")]
        out: PathBuf,
        /// `truth,prediction` trace.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Alignment statistics written by `adapt`.
        #[arg(long)]
        alignment: Option<PathBuf>,
        /// Adaptation trace (JSON lines).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Few-shot result files.
        #[arg(long, num_args = 1..)]
        fewshot: Vec<PathBuf>,
        /// Unsupervised report drawn as a horizontal line on the few-shot plot.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> flooddan::Result<()> {
    match cli.command {
        Command::Synth { common } => commands::synth(&common),
        Command::Pretrain { common, source } => commands::pretrain(&common, source),
        Command::Adapt {
            common,
            source,
            target,
            pretrained,
        } => commands::adapt(&common, source, target, pretrained),
        Command::Evaluate {
            common,
            target,
            pretrained,
            adapted,
            supervised,
        } => commands::evaluate(&common, target, pretrained, adapted, supervised),
        Command::Fewshot {
            common,
            target,
            hours,
            repeats,
            unsupervised_report,
        } => commands::fewshot(&common, target, hours, repeats, unsupervised_report),
        Command::Plot {
            out,
            predictions,
            alignment,
            trace,
            fewshot,
            report,
        } => plots::plot_command(&out, predictions, alignment, trace, fewshot, report),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
