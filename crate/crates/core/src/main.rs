use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use spikegrasp::commands::{cmd_compare, cmd_energy, cmd_eval, cmd_train, CommandError, EnergyArgs};

/// Spiking actor-critic reach-and-grasp: training, evaluation, model
/// comparison and energy auditing.
#[derive(Parser)]
#[command(name = "spikegrasp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from an experiment config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the root seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run deterministic evaluation episodes from a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional config for environment overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write eval_episodes.csv (and trajectory dumps).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write a per-step trajectory CSV.
        #[arg(long, default_value_t = false)]
        dump_trajectories: bool,
    },
    /// Analytical energy report from explicit rates or two checkpoints.
    Energy {
        /// Spiking-policy checkpoint (rates measured live).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Matched conventional-policy checkpoint.
        #[arg(long)]
        ann_checkpoint: Option<PathBuf>,
        /// Explicit input-layer spike rate.
        #[arg(long)]
        spike_rate: Option<f64>,
        /// Explicit output-layer membrane activation rate.
        #[arg(long)]
        membrane_rate: Option<f64>,
        /// Explicit baseline input activation rate.
        #[arg(long)]
        input_rate: Option<f64>,
        /// Explicit baseline hidden activation rate.
        #[arg(long)]
        output_rate: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Layer sizes as `n0,n1,n2`.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train all four arms (snn/ann x vanilla/crl) over shared seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Number of consecutive root seeds to run per arm.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), CommandError> {
    let parts: Vec<_> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CommandError::Usage(format!("--dims expects n0,n1,n2, got '{s}'")));
    }
    let parse = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| CommandError::Usage(format!("bad dimension '{p}' in --dims")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Train { config, out_dir, seed } => {
            cmd_train(&config, out_dir.as_deref(), seed)?;
        }
        Command::Eval { checkpoint, episodes, seed, config, out_dir, dump_trajectories } => {
            cmd_eval(
                &checkpoint,
                episodes,
                seed,
                config.as_deref(),
                out_dir.as_deref(),
                dump_trajectories,
            )?;
        }
        Command::Energy {
            checkpoint,
            ann_checkpoint,
            spike_rate,
            membrane_rate,
            input_rate,
            output_rate,
            batch,
            steps,
            dims,
            config,
            out_dir,
        } => {
            let dims = dims.as_deref().map(parse_dims).transpose()?;
            cmd_energy(&EnergyArgs {
                snn_checkpoint: checkpoint,
                ann_checkpoint,
                spike_rate,
                membrane_rate,
                input_rate,
                output_rate,
                batch,
                steps,
                dims,
                config,
                out_dir,
            })?;
        }
        Command::Compare { config, seeds, out_dir } => {
            cmd_compare(&config, seeds, out_dir.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
