//! `scorecast`: data generation, training, prediction, evaluation and the
//! engagement experiment from one binary.

mod commands;
mod config;
mod error;
mod manifest;

use clap::{Parser, Subcommand};
use commands::{AbFlags, Ctx, EvalModel, ModelKind, Partition};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "scorecast", version, about = "Exam-score prediction and engagement experiments")]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for data, models, reports and manifests.
    #[arg(long, global = true, default_value = "scorecast-out")]
    out_dir: PathBuf,
    /// Override one config value, e.g. `--set cf.k=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted synthetic corpus.
    GenData {
        #[arg(long)]
        users: Option<usize>,
    },
    /// Train the latent-factor model and calibrate its score mapping.
    TrainCf {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Masked-assessment pre-training of the attentive encoder.
    Pretrain {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fine-tune the attentive model on score labels.
    Finetune {
        #[arg(long)]
        epochs: Option<usize>,
        /// Train only the score head.
        #[arg(long)]
        freeze_encoder: bool,
        /// Start from a fresh encoder instead of the pre-trained one.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Predict scores for users from their history.
    Predict {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// User id; repeatable.
        #[arg(long = "user", required = true)]
        users: Vec<String>,
        /// Only use interactions at or before this epoch-millisecond time.
        #[arg(long)]
        at: Option<i64>,
    },
    /// MAE and RMSE of one or more models on a split partition.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        partition: Partition,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "cf,attentive,mean")]
        models: Vec<EvalModel>,
        /// Skip labels without history instead of failing.
        #[arg(long)]
        allow_skip: bool,
    },
    /// Simulate the two-arm engagement experiment.
    Abtest {
        #[command(flatten)]
        flags: AbFlags,
    },
    /// Recompute engagement metrics from a journey log and summarize.
    Report {
        /// Journey log (defaults to the abtest output).
        #[arg(long)]
        journeys: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> String {
        let s = match self {
            Command::GenData { .. } => "gen-data",
            Command::TrainCf { .. } => "train-cf",
            Command::Pretrain { .. } => "pretrain",
            Command::Finetune { from_scratch: true, .. } => "finetune-scratch",
            Command::Finetune { .. } => "finetune",
            Command::Predict { model: ModelKind::Cf, .. } => "predict-cf",
            Command::Predict { .. } => "predict-attentive",
            Command::Evaluate { partition, .. } => {
                return format!("evaluate-{}", format!("{partition:?}").to_lowercase())
            }
            Command::Abtest { .. } => "abtest",
            Command::Report { .. } => "report",
        };
        s.to_string()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.sets, cli.seed)?;
    match &cli.command {
        Command::GenData { users: Some(n) } => cfg.synth.n_users = *n,
        Command::TrainCf { epochs, k } => {
            if let Some(e) = epochs {
                cfg.cf.epochs = *e;
            }
            if let Some(k) = k {
                cfg.cf.k = *k;
            }
        }
        Command::Pretrain { epochs: Some(e) } => cfg.pretrain.epochs = *e,
        Command::Finetune { epochs, freeze_encoder, .. } => {
            if let Some(e) = epochs {
                cfg.finetune.epochs = *e;
            }
            cfg.finetune.freeze_encoder |= freeze_encoder;
        }
        Command::Abtest { flags } => flags.apply(&mut cfg)?,
        _ => {}
    }
    cfg.validate()?;
    let name = cli.command.name();
    let mut ctx = Ctx::new(cfg, cli.out_dir, cli.force);
    match cli.command {
        Command::GenData { .. } => commands::gen_data(&mut ctx)?,
        Command::TrainCf { .. } => commands::train_cf_cmd(&mut ctx)?,
        Command::Pretrain { .. } => commands::pretrain_cmd(&mut ctx)?,
        Command::Finetune { from_scratch, .. } => commands::finetune_cmd(&mut ctx, from_scratch)?,
        Command::Predict { model, users, at } => commands::predict_cmd(&mut ctx, model, &users, at)?,
        Command::Evaluate { partition, models, allow_skip } => {
            commands::evaluate_cmd(&mut ctx, partition, &models, allow_skip)?
        }
        Command::Abtest { .. } => commands::abtest_cmd(&mut ctx)?,
        Command::Report { journeys } => commands::report_cmd(&mut ctx, journeys)?,
    }
    let path = manifest::write(&ctx.out_dir, &name, &ctx.cfg, &ctx.art)?;
    ctx.log(config::LogLevel::Info, format!("manifest: {}", path.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err =
                CliError::Config(e.to_string().lines().next().unwrap_or("invalid arguments").to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
