mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Acoustic anomaly-detection pipeline: synthetic data generation, log-Mel
/// feature extraction, autoencoder / deep SVDD training, and evaluation.
#[derive(Parser)]
#[command(name = "aad", version, about)]
struct Cli {
    /// Worker threads for fan-out stages (currently all stages are
    /// single-threaded; recorded in the run manifest).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Force single-threaded, fixed-order reductions for bit-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Ae,
    Svdd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ValvePreprocessArg {
    On,
    Off,
    /// Apply to valve clips only (the default policy).
    Auto,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset tree from a JSON spec.
    Synth {
        /// JSON config with a top-level {"schema_version": 1, "spec": {...}}.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Extract log-Mel features from a dataset tree into a .feat cache.
    Features {
        /// Dataset root; defaults to $AAD_DATA_ROOT.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one machine type (dir name, e.g. "fan").
        #[arg(long)]
        machine: Option<String>,
        /// Restrict to one SNR tag (dir name, e.g. "0dB").
        #[arg(long)]
        snr: Option<String>,
        #[arg(long, value_enum, default_value_t = ValvePreprocessArg::Auto)]
        valve_preprocess: ValvePreprocessArg,
    },
    /// Train one model on one (machine, model_id, snr) cell.
    Train {
        /// Feature cache directory produced by `features`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Embedding width for SVDD (reference values: 2, 4, 8).
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 42)]
        split_seed: u64,
        #[arg(long)]
        machine: String,
        #[arg(long, default_value = "id_00")]
        id: String,
        #[arg(long)]
        snr: String,
        /// Soft-boundary objective instead of the one-class default.
        #[arg(long)]
        soft_boundary: bool,
        /// Optional JSON overriding the training hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints against their test splits and write a report.
    Eval {
        /// Directory containing `train` output subdirectories.
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure per-clip scoring latency for a checkpoint.
    Bench {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
    /// Run the built-in verification suite (gradient checks, AUC oracle
    /// equivalence, shape laws, parameter counts).
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Ctx { threads: cli.threads, deterministic: cli.deterministic };
    let result = match cli.command {
        Command::Synth { config, out, overwrite } => {
            commands::cmd_synth(&ctx, &config, &out, overwrite)
        }
        Command::Features { data, out, machine, snr, valve_preprocess } => {
            commands::cmd_features(&ctx, data, &out, machine, snr, valve_preprocess)
        }
        Command::Train {
            features,
            model,
            dim,
            seed,
            split_seed,
            machine,
            id,
            snr,
            soft_boundary,
            config,
            out,
        } => commands::cmd_train(
            &ctx,
            &features,
            model,
            dim,
            seed,
            split_seed,
            &machine,
            &id,
            &snr,
            soft_boundary,
            config.as_deref(),
            &out,
        ),
        Command::Eval { checkpoints, features, out } => {
            commands::cmd_eval(&ctx, &checkpoints, &features, &out)
        }
        Command::Bench { features, checkpoint, reps } => {
            commands::cmd_bench(&ctx, &features, &checkpoint, reps)
        }
        Command::Verify => commands::cmd_verify(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(commands::exit_code_for(&err))
        }
    }
}
