use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Exit code for invalid usage or unusable input.
const EXIT_INPUT: u8 = 2;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "vocoder", version, about = "Mel-spectrogram vocoder: features, training, synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract log-mel feature caches from a directory of WAV files.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON mel configuration (defaults to the training defaults).
        #[arg(long = "mel-cfg")]
        mel_cfg: Option<PathBuf>,
    },
    /// Train a generator and discriminators on a directory of WAV files.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON training config, or a run manifest to repeat its run.
        #[arg(long, conflicts_with = "resume")]
        config: Option<PathBuf>,
        /// Continue from a checkpoint; its stored config is used.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// One of B0, P1, P2, P3, P4.
        #[arg(long, conflicts_with = "resume")]
        ablation: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, conflicts_with = "resume")]
        seed: Option<u64>,
    },
    /// Synthesize a WAV from a feature cache or from a WAV (copy synthesis).
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        /// ops, losses or models.
        #[arg(long)]
        scope: String,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plot loss curves and compare two recordings.
    Eval {
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Reference and estimate WAVs of equal length.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        spectrogram: Option<Vec<PathBuf>>,
    },
    /// Write a small synthetic speech-like dataset.
    SmokeData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract { input, out, mel_cfg } => commands::extract(&input, &out, mel_cfg.as_deref()),
        Command::Train {
            data,
            out,
            config,
            resume,
            ablation,
            steps,
            seed,
        } => commands::train(commands::TrainArgs {
            data,
            out,
            config,
            resume,
            ablation,
            steps,
            seed,
        }),
        Command::Synth { ckpt, input, out } => commands::synth(&ckpt, &input, &out),
        Command::Gradcheck { scope, tol, eps, seed } => commands::gradcheck(&scope, eps, tol, seed),
        Command::Eval { log, out, spectrogram } => commands::eval(log.as_deref(), &out, spectrogram.as_deref()),
        Command::SmokeData {
            out,
            count,
            seconds,
            seed,
        } => commands::smoke_data(&out, count, seconds, seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::InputError>().is_some() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
