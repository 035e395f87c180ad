use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dlban::config::PipelineConfig;
use dlban::pipeline::{self, Context, Selection};
use dlban::CliError;
use dlban_core::classifier::Variant;
use dlban_core::loss::GanLossMode;

#[derive(Parser)]
#[command(name = "dlban", version, about = "Short-term voltage stability assessment pipeline")]
struct Cli {
    /// JSON pipeline configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    BigruAttention,
    Gru,
    Lstm,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::BigruAttention => Variant::BigruAttention,
            VariantArg::Gru => Variant::Gru,
            VariantArg::Lstm => Variant::Lstm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    LeastSquares,
    CrossEntropy,
}

#[derive(clap::Args)]
struct SelectArgs {
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Dataset stem inside the output directory.
    #[arg(long, default_value = "augmented")]
    dataset: String,
}

impl SelectArgs {
    fn selection(&self) -> Selection {
        Selection {
            variant: self.variant.map(Into::into),
            dataset: self.dataset.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario grid and write prelabeled windows.
    Generate,
    /// Complete the labels with SFCM and split train/test.
    Label,
    /// Train the conditional GAN and write the augmented dataset.
    Augment {
        #[arg(long, value_enum)]
        loss_mode: Option<LossArg>,
    },
    /// Train a classifier.
    Train {
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on the test partition.
    Eval {
        #[command(flatten)]
        select: SelectArgs,
        /// Report metrics of confusion counts from a JSON file instead.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Record the measured mean latency in the JSON report.
        #[arg(long)]
        timing: bool,
    },
    /// Retrain across observation windows.
    SweepOtw {
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Use the full training budget instead of the reduced sweep budget.
        #[arg(long)]
        full_budget: bool,
    },
    /// Evaluate under measurement noise.
    Noise {
        #[command(flatten)]
        select: SelectArgs,
    },
    /// Assess a single window file.
    Assess {
        #[command(flatten)]
        select: SelectArgs,
        /// Checkpoint path; defaults to the selected model in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        window: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Context::new(config, cli.out)?;
    Ok(match cli.command {
        Command::Generate => pipeline::cmd_generate(&ctx)?.to_string(),
        Command::Label => pipeline::cmd_label(&ctx)?.to_string(),
        Command::Augment { loss_mode } => {
            let loss = loss_mode.map(|l| match l {
                LossArg::LeastSquares => GanLossMode::LeastSquares,
                LossArg::CrossEntropy => GanLossMode::CrossEntropy,
            });
            pipeline::cmd_augment(&ctx, loss)?.to_string()
        }
        Command::Train { select, epochs } => pipeline::cmd_train(&ctx, &select.selection(), epochs)?.to_string(),
        Command::Eval { counts: Some(path), .. } => pipeline::cmd_eval_counts(&ctx, &path)?.to_string(),
        Command::Eval { select, timing, .. } => pipeline::cmd_eval(&ctx, &select.selection(), timing)?.to_string(),
        Command::SweepOtw { variant, full_budget } => {
            pipeline::cmd_sweep_otw(&ctx, variant.map(Into::into), full_budget)?.to_string()
        }
        Command::Noise { select } => pipeline::cmd_noise(&ctx, &select.selection())?.to_string(),
        Command::Assess { select, model, window } => {
            pipeline::assessment_line(&pipeline::cmd_assess(&ctx, &select.selection(), model.as_deref(), &window)?)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::FAILURE
        }
    }
}
